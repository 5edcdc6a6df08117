#pragma once

#include <string>
#include <vector>

#include "patchgrasp/hand.h"
#include "patchgrasp/transfer.h"

namespace patchgrasp {

double gammaD(const Vector3& objectPoint, const Vector3& handPoint);
double gammaN(const Vector3& handNormal, const Vector3& objectNormal);
double gammaP(const VectorX& theta, const VectorX& prior);

// One object point paired with a bound skin vertex.
struct PairTarget {
  std::string label;
  int objectVertex = -1;
  int skinVertex = -1;
  Vector3 objectPoint = Vector3::Zero();
  Vector3 objectNormal = Vector3::Zero();
};

struct Weights {
  double distance = 1.0;
  double normal = 0.0;
  double prior = 0.0;
};

// lambda_d = 1, lambda_n = 0.05 L^2, lambda_p = 0.001 L^2 / J with L the scene
// length scale (object bounding-box diagonal) and J the DOF count.
Weights defaultWeights(double lengthScale, int dofCount);

// Pairs for every reachable correspondence whose skin vertex is bound. Object
// points and normals are taken from the mesh moved by objectPose.
std::vector<PairTarget> buildPairs(const TriangleMesh& object, const Isometry3& objectPose,
                                   const std::vector<Correspondence>& correspondences, const SkinBinding& binding);

struct TermBreakdown {
  double distance = 0.0; // sum of lambda_d * gamma_d
  double normal = 0.0;
  double prior = 0.0;
  double total = 0.0;
  double meanPairDistance = 0.0; // unweighted mean |p_o - p_h|
};

// The hand and binding must outlive the problem.
class PoseProblem {
public:
  PoseProblem(const ArticulatedHand& hand, const SkinBinding& binding, std::vector<PairTarget> pairs, Weights weights,
              double lengthScale);

  const ArticulatedHand& hand() const { return *hand_; }
  const SkinBinding& binding() const { return *binding_; }
  const std::vector<PairTarget>& pairs() const { return pairs_; }
  const Weights& weights() const { return weights_; }
  double lengthScale() const { return lengthScale_; }
  int dofCount() const { return hand_->dofCount(); }

  const VectorX& lower() const { return lower_; }
  const VectorX& upper() const { return upper_; }
  void setBounds(int dof, double lower, double upper);
  void setBounds(const VectorX& lower, const VectorX& upper);
  VectorX clamp(const VectorX& theta) const;

  const VectorX& prior() const { return prior_; }
  // Clamped into the bounds.
  void setPrior(const VectorX& prior);

  // Central-difference step per DOF: 1e-5 rad for angles, 1e-5 L for lengths.
  double finiteDifferenceStep(int dof) const;

  double value(const VectorX& theta) const;
  TermBreakdown terms(const VectorX& theta) const;
  // Pair terms by central differences scaled by stepScale, prior term exact.
  double valueAndGradient(const VectorX& theta, VectorX& gradient, double stepScale = 1.0) const;
  std::vector<double> pairDistances(const VectorX& theta) const;

private:
  // Sum over pairs of the weighted distance and normal terms.
  void pairTerms(const VectorX& theta, double& distance, double& normal) const;
  double pairValue(const VectorX& theta) const;

  const ArticulatedHand* hand_;
  const SkinBinding* binding_;
  std::vector<PairTarget> pairs_;
  Weights weights_;
  double lengthScale_;
  VectorX lower_, upper_, prior_;
};

} // namespace patchgrasp
