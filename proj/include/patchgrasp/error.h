#pragma once

#include <stdexcept>
#include <string>

namespace patchgrasp {

// Bad or inconsistent input: unreadable files, malformed documents, out-of-range ids.
class InputError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

// Numerical breakdown: singular factorizations, non-finite objective values.
class NumericalError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

} // namespace patchgrasp
