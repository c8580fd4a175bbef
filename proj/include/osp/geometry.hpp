#pragma once

#include <Eigen/Dense>

namespace osp {

using FeatureVector = Eigen::VectorXd;
using VectorRef = Eigen::Ref<const Eigen::VectorXd>;

/// Result of splitting a feature along a reference direction.
///
/// `parallel + orthogonal` reconstructs the input; `pruned` is the input with
/// an `alpha` fraction of its parallel component removed.
struct Decomposition {
  FeatureVector parallel;
  FeatureVector orthogonal;
  FeatureVector pruned;
  double cosine = 0.0;
};

/// Cosine of the angle between `a` and `b`, clamped to [-1, 1].
/// Throws DegenerateVectorError when either input has zero norm.
double cosine(const VectorRef& a, const VectorRef& b);

/// Component of `z` collinear with `o`: (z . o_hat) o_hat.
FeatureVector project_parallel(const VectorRef& z, const VectorRef& o);

/// Soft orthogonal decomposition: pruned = z - alpha * project_parallel(z, o).
Decomposition soft_orthogonal_decompose(const VectorRef& z, const VectorRef& o, double alpha);

/// Vector-Jacobian product of the pruned output w.r.t. both inputs.
struct DecompositionGrad {
  FeatureVector d_feature;
  FeatureVector d_reference;
};

DecompositionGrad soft_orthogonal_backward(const VectorRef& z, const VectorRef& o, double alpha,
                                           const VectorRef& grad_pruned);

} // namespace osp
