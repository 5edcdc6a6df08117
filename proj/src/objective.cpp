#include "patchgrasp/objective.h"

#include <cmath>

#include "patchgrasp/error.h"

namespace patchgrasp {

double gammaD(const Vector3& objectPoint, const Vector3& handPoint) { return (objectPoint - handPoint).squaredNorm(); }

double gammaN(const Vector3& handNormal, const Vector3& objectNormal) {
  const double a = 1.0 + handNormal.dot(objectNormal);
  return a * a;
}

double gammaP(const VectorX& theta, const VectorX& prior) {
  if (theta.size() != prior.size()) throw InputError("pose and prior have different sizes");
  return (theta - prior).squaredNorm();
}

Weights defaultWeights(double lengthScale, int dofCount) {
  const double l2 = lengthScale * lengthScale;
  return {1.0, 0.05 * l2, 0.001 * l2 / dofCount};
}

std::vector<PairTarget> buildPairs(const TriangleMesh& object, const Isometry3& objectPose,
                                   const std::vector<Correspondence>& correspondences, const SkinBinding& binding) {
  std::vector<PairTarget> pairs;
  for (const Correspondence& c : correspondences) {
    for (const CorrespondencePair& p : c.pairs) {
      if (p.unreachable || p.skinVertex < 0) continue;
      if (p.objectVertex < 0 || p.objectVertex >= static_cast<int>(object.nVertices())) {
        throw InputError("correspondence '" + c.label + "': object vertex " + std::to_string(p.objectVertex) +
                         " out of range");
      }
      if (p.skinVertex >= static_cast<int>(binding.link.size())) {
        throw InputError("correspondence '" + c.label + "': skin vertex " + std::to_string(p.skinVertex) +
                         " out of range");
      }
      if (!binding.isBound(p.skinVertex)) continue;
      pairs.push_back({c.label, p.objectVertex, p.skinVertex, objectPose * object.position(p.objectVertex),
                       objectPose.linear() * object.normal(p.objectVertex)});
    }
  }
  return pairs;
}

PoseProblem::PoseProblem(const ArticulatedHand& hand, const SkinBinding& binding, std::vector<PairTarget> pairs,
                         Weights weights, double lengthScale)
    : hand_(&hand), binding_(&binding), pairs_(std::move(pairs)), weights_(weights), lengthScale_(lengthScale),
      lower_(hand.lower()), upper_(hand.upper()), prior_(hand.rest()) {
  if (pairs_.empty()) throw InputError("pose problem has no bound, reachable pairs");
  if (!(weights_.distance >= 0 && weights_.normal >= 0 && weights_.prior >= 0) ||
      weights_.distance + weights_.normal + weights_.prior <= 0) {
    throw InputError("weights must be non-negative with at least one positive");
  }
  if (!(lengthScale_ > 0.0)) throw InputError("length scale must be positive");
  for (size_t i = 0; i < pairs_.size(); i++) {
    const PairTarget& p = pairs_[i];
    const std::string name = "pair " + std::to_string(i) + " ('" + p.label + "', object " +
                             std::to_string(p.objectVertex) + ", skin " + std::to_string(p.skinVertex) + ")";
    if (p.skinVertex < 0 || p.skinVertex >= static_cast<int>(binding.link.size()) || !binding.isBound(p.skinVertex)) {
      throw InputError(name + ": skin vertex is not bound");
    }
    if (!p.objectPoint.allFinite()) throw NumericalError(name + ": non-finite object point");
    if (!(std::abs(p.objectNormal.norm() - 1.0) < 1e-6)) throw NumericalError(name + ": degenerate object normal");
    if (!(std::abs(binding.localNormal[p.skinVertex].norm() - 1.0) < 1e-6)) {
      throw NumericalError(name + ": degenerate skin normal");
    }
  }
}

void PoseProblem::setBounds(int dof, double lower, double upper) {
  if (dof < 0 || dof >= dofCount()) throw InputError("DOF index " + std::to_string(dof) + " out of range");
  if (!(lower <= upper)) throw InputError("bounds for '" + hand_->dofNames()[dof] + "' are not ordered");
  lower_[dof] = lower;
  upper_[dof] = upper;
  prior_ = clamp(prior_);
}

void PoseProblem::setBounds(const VectorX& lower, const VectorX& upper) {
  if (lower.size() != dofCount() || upper.size() != dofCount()) throw InputError("bounds have the wrong size");
  for (int i = 0; i < dofCount(); i++) setBounds(i, lower[i], upper[i]);
}

VectorX PoseProblem::clamp(const VectorX& theta) const { return theta.cwiseMax(lower_).cwiseMin(upper_); }

void PoseProblem::setPrior(const VectorX& prior) {
  if (prior.size() != dofCount()) throw InputError("prior has the wrong size");
  if (!prior.allFinite()) throw InputError("prior is not finite");
  prior_ = clamp(prior);
}

double PoseProblem::finiteDifferenceStep(int dof) const {
  return hand_->isAngular(dof) ? 1e-5 : 1e-5 * lengthScale_;
}

void PoseProblem::pairTerms(const VectorX& theta, double& distance, double& normal) const {
  std::vector<Isometry3> fk = hand_->forwardKinematics(theta);
  distance = 0.0;
  normal = 0.0;
  for (const PairTarget& p : pairs_) {
    SkinSample s = skinPointAndNormal(*binding_, fk, p.skinVertex);
    distance += gammaD(p.objectPoint, s.position);
    normal += gammaN(s.normal, p.objectNormal);
  }
  distance *= weights_.distance;
  normal *= weights_.normal;
}

double PoseProblem::pairValue(const VectorX& theta) const {
  double d, n;
  pairTerms(theta, d, n);
  return d + n;
}

TermBreakdown PoseProblem::terms(const VectorX& theta) const {
  TermBreakdown t;
  pairTerms(theta, t.distance, t.normal);
  t.prior = weights_.prior * gammaP(theta, prior_);
  t.total = t.distance + t.normal + t.prior;
  std::vector<double> d = pairDistances(theta);
  for (double x : d) t.meanPairDistance += x;
  t.meanPairDistance /= static_cast<double>(d.size());
  if (!std::isfinite(t.total)) {
    for (size_t i = 0; i < d.size(); i++) {
      if (!std::isfinite(d[i])) throw NumericalError("objective is not finite at pair " + std::to_string(i));
    }
    throw NumericalError("objective is not finite");
  }
  return t;
}

double PoseProblem::value(const VectorX& theta) const {
  double v = pairValue(theta) + weights_.prior * gammaP(theta, prior_);
  if (!std::isfinite(v)) return terms(theta).total; // throws with the offending pair
  return v;
}

double PoseProblem::valueAndGradient(const VectorX& theta, VectorX& gradient, double stepScale) const {
  const double v = value(theta);
  gradient = 2.0 * weights_.prior * (theta - prior_);
  VectorX probe = theta;
  for (int i = 0; i < dofCount(); i++) {
    const double h = stepScale * finiteDifferenceStep(i);
    probe[i] = theta[i] + h;
    const double plus = pairValue(probe);
    probe[i] = theta[i] - h;
    const double minus = pairValue(probe);
    probe[i] = theta[i];
    gradient[i] += (plus - minus) / (2.0 * h);
  }
  if (!gradient.allFinite()) throw NumericalError("objective gradient is not finite");
  return v;
}

std::vector<double> PoseProblem::pairDistances(const VectorX& theta) const {
  std::vector<Isometry3> fk = hand_->forwardKinematics(theta);
  std::vector<double> out;
  out.reserve(pairs_.size());
  for (const PairTarget& p : pairs_) out.push_back((p.objectPoint - skinPointAndNormal(*binding_, fk, p.skinVertex).position).norm());
  return out;
}

} // namespace patchgrasp
