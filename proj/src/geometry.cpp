#include "osp/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "osp/errors.hpp"

namespace osp {

namespace {

double checked_squared_norm(const VectorRef& v, const char* name) {
  if (v.size() == 0) {
    throw DegenerateVectorError(std::string(name) + ": empty vector");
  }
  const double sq = v.squaredNorm();
  if (!(sq > 0.0) || !std::isfinite(sq)) {
    throw DegenerateVectorError(std::string(name) + ": zero or non-finite norm");
  }
  return sq;
}

void check_same_dim(const VectorRef& a, const VectorRef& b) {
  if (a.size() != b.size()) {
    throw ShapeError("feature dimension mismatch: " + std::to_string(a.size()) + " vs " +
                     std::to_string(b.size()));
  }
}

} // namespace

double cosine(const VectorRef& a, const VectorRef& b) {
  check_same_dim(a, b);
  const double na = std::sqrt(checked_squared_norm(a, "cosine"));
  const double nb = std::sqrt(checked_squared_norm(b, "cosine"));
  return std::clamp(a.dot(b) / (na * nb), -1.0, 1.0);
}

FeatureVector project_parallel(const VectorRef& z, const VectorRef& o) {
  check_same_dim(z, o);
  const double oo = checked_squared_norm(o, "project_parallel");
  return (z.dot(o) / oo) * o;
}

Decomposition soft_orthogonal_decompose(const VectorRef& z, const VectorRef& o, double alpha) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) {
    throw std::invalid_argument("soft_orthogonal_decompose: alpha must lie in [0, 1]");
  }
  Decomposition out;
  out.parallel = project_parallel(z, o);
  out.orthogonal = z - out.parallel;
  out.pruned = z - alpha * out.parallel;
  const double zz = z.squaredNorm();
  // a zero feature has no angle to o; report it as orthogonal
  out.cosine = zz > 0.0 ? cosine(z, o) : 0.0;
  return out;
}

DecompositionGrad soft_orthogonal_backward(const VectorRef& z, const VectorRef& o, double alpha,
                                           const VectorRef& grad_pruned) {
  check_same_dim(z, o);
  check_same_dim(z, grad_pruned);
  const double oo = checked_squared_norm(o, "soft_orthogonal_backward");
  const double s = z.dot(o) / oo;
  const double og = o.dot(grad_pruned);

  // pruned = z - alpha * s(z, o) * o  with  s = (z.o)/(o.o)
  DecompositionGrad g;
  g.d_feature = grad_pruned - (alpha * og / oo) * o;
  g.d_reference = -alpha * (s * grad_pruned + (og / oo) * (z - 2.0 * s * o));
  return g;
}

} // namespace osp
