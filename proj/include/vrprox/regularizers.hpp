#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <stdexcept>
#include <utility>
#include <vector>

#include "vrprox/types.hpp"

namespace vrprox {

enum class RegTag { kL1, kGroup, kScad, kMcp };

/// Partition of {0..p-1} into disjoint blocks for the grouped (1,2) norm.
struct GroupMap {
  std::vector<std::vector<Index>> blocks;

  Index dim() const {
    Index d = 0;
    for (const auto& g : blocks) d += static_cast<Index>(g.size());
    return d;
  }

  static GroupMap contiguous(Index p, Index q) {
    if (q < 1 || p % q != 0) throw std::invalid_argument("GroupMap: q must divide p");
    GroupMap map;
    for (Index start = 0; start < p; start += q) {
      std::vector<Index> block(static_cast<std::size_t>(q));
      for (Index j = 0; j < q; ++j) block[static_cast<std::size_t>(j)] = start + j;
      map.blocks.push_back(std::move(block));
    }
    return map;
  }

  void validate(Index p) const {
    std::vector<char> seen(static_cast<std::size_t>(p), 0);
    for (const auto& g : blocks) {
      if (g.empty()) throw std::invalid_argument("GroupMap: empty block");
      for (Index j : g) {
        if (j < 0 || j >= p) throw std::invalid_argument("GroupMap: index out of range");
        if (seen[static_cast<std::size_t>(j)]) throw std::invalid_argument("GroupMap: overlapping blocks");
        seen[static_cast<std::size_t>(j)] = 1;
      }
    }
    if (dim() != p) throw std::invalid_argument("GroupMap: blocks must cover all coordinates");
  }
};

/// One of the four penalties. SCAD and MCP carry their shape parameter; the
/// grouped norm carries the partition and fixes the inner exponent to 2.
struct RegularizerKind {
  RegTag tag = RegTag::kL1;
  GroupMap groups;
  Scalar zeta = 3.7;  // SCAD shape, > 2
  Scalar b = 3.0;     // MCP shape, > 0

  static RegularizerKind l1() { return {RegTag::kL1, {}, 3.7, 3.0}; }
  static RegularizerKind group(GroupMap map) {
    return {RegTag::kGroup, std::move(map), 3.7, 3.0};
  }
  static RegularizerKind scad(Scalar zeta) {
    if (!(zeta > 2.0)) throw std::invalid_argument("RegularizerKind: SCAD needs zeta > 2");
    return {RegTag::kScad, {}, zeta, 3.0};
  }
  static RegularizerKind mcp(Scalar b) {
    if (!(b > 0.0)) throw std::invalid_argument("RegularizerKind: MCP needs b > 0");
    return {RegTag::kMcp, {}, 3.7, b};
  }

  bool is_convex() const { return tag == RegTag::kL1 || tag == RegTag::kGroup; }

  // mu such that pen + (mu/2) t^2 is convex: 1/(zeta-1) for SCAD, 1/b for MCP.
  Scalar concavity() const {
    switch (tag) {
      case RegTag::kScad: return 1.0 / (zeta - 1.0);
      case RegTag::kMcp: return 1.0 / b;
      default: return 0.0;
    }
  }
};

// ---------------------------------------------------------------------------
// Scalar penalty pieces
// ---------------------------------------------------------------------------

template <typename Scalar>
Scalar scad_value(Scalar t, Scalar lambda, Scalar zeta) {
  const Scalar a = std::abs(t);
  if (a <= lambda) return lambda * a;
  if (a <= zeta * lambda) return -(a * a - 2.0 * zeta * lambda * a + lambda * lambda) / (2.0 * (zeta - 1.0));
  return (zeta + 1.0) * lambda * lambda / 2.0;
}

template <typename Scalar>
Scalar mcp_value(Scalar t, Scalar lambda, Scalar b) {
  const Scalar a = std::abs(t);
  if (a <= lambda * b) return lambda * a - a * a / (2.0 * b);
  return lambda * lambda * b / 2.0;
}

// Convexified scalar penalty (pen(t) + (mu/2) t^2) / lambda.
template <typename Scalar>
Scalar scad_convex_value(Scalar t, Scalar lambda, Scalar zeta) {
  const Scalar a = std::abs(t);
  const Scalar c = (zeta - 1.0) * lambda;
  if (a <= lambda) return a + a * a / (2.0 * c);
  if (a <= zeta * lambda) return (2.0 * zeta * a - lambda) / (2.0 * (zeta - 1.0));
  return (zeta + 1.0) * lambda / 2.0 + a * a / (2.0 * c);
}

template <typename Scalar>
Scalar mcp_convex_value(Scalar t, Scalar lambda, Scalar b) {
  const Scalar a = std::abs(t);
  if (a <= lambda * b) return a;
  return lambda * b / 2.0 + a * a / (2.0 * lambda * b);
}

template <typename Scalar>
Scalar soft_threshold(Scalar z, Scalar w) {
  const Scalar a = std::abs(z) - w;
  return a > 0.0 ? (z > 0.0 ? a : -a) : 0.0;
}

// argmin over t of (t - z)^2 / 2 + w * scad_convex_value(t). The stationarity
// map t + w g'(t) is strictly increasing, so exactly one branch applies.
template <typename Scalar>
Scalar scad_convex_prox1d(Scalar z, Scalar w, Scalar lambda, Scalar zeta) {
  const Scalar a = std::abs(z);
  if (a <= w) return 0.0;
  const Scalar sign = z > 0.0 ? 1.0 : -1.0;
  const Scalar c = (zeta - 1.0) * lambda;
  Scalar t = (a - w) / (1.0 + w / c);
  if (t <= lambda) return sign * t;
  t = a - w * zeta / (zeta - 1.0);
  if (t <= zeta * lambda) return sign * t;
  return sign * a / (1.0 + w / c);
}

template <typename Scalar>
Scalar mcp_convex_prox1d(Scalar z, Scalar w, Scalar lambda, Scalar b) {
  const Scalar a = std::abs(z);
  if (a <= w) return 0.0;
  const Scalar sign = z > 0.0 ? 1.0 : -1.0;
  const Scalar t = a - w;
  if (t <= lambda * b) return sign * t;
  return sign * a / (1.0 + w / (lambda * b));
}

// ---------------------------------------------------------------------------
// Vector-level operations
// ---------------------------------------------------------------------------

/// Penalty term of the objective: lambda * psi(theta) for the convex norms,
/// the original folded-concave sum for SCAD/MCP (lambda is baked into those).
inline Scalar penalty_value(const RegularizerKind& reg, Scalar lambda, const Vector& theta) {
  switch (reg.tag) {
    case RegTag::kL1:
      return lambda * theta.lpNorm<1>();
    case RegTag::kGroup: {
      Scalar acc = 0.0;
      for (const auto& g : reg.groups.blocks) {
        Scalar sq = 0.0;
        for (Index j : g) sq += theta(j) * theta(j);
        acc += std::sqrt(sq);
      }
      return lambda * acc;
    }
    case RegTag::kScad: {
      Scalar acc = 0.0;
      for (Index j = 0; j < theta.size(); ++j) acc += scad_value(theta(j), lambda, reg.zeta);
      return acc;
    }
    case RegTag::kMcp: {
      Scalar acc = 0.0;
      for (Index j = 0; j < theta.size(); ++j) acc += mcp_value(theta(j), lambda, reg.b);
      return acc;
    }
  }
  return 0.0;
}

/// g_lambda(theta) = sum_j (pen(theta_j) + (mu/2) theta_j^2) / lambda for
/// SCAD/MCP; this is the constraint norm of the non-convex estimator and the
/// prox penalty of the non-convex solver.
inline Scalar convexified_penalty(const RegularizerKind& reg, Scalar lambda, Scalar mu,
                                  const Vector& theta) {
  if (reg.tag != RegTag::kScad && reg.tag != RegTag::kMcp)
    throw std::invalid_argument("convexified_penalty: defined for SCAD/MCP only");
  if (std::abs(mu - reg.concavity()) > 1e-12 * std::max(1.0, reg.concavity()))
    throw std::invalid_argument("convexified_penalty: mu does not match the regularizer shape");
  Scalar acc = 0.0;
  if (reg.tag == RegTag::kScad)
    for (Index j = 0; j < theta.size(); ++j) acc += scad_convex_value(theta(j), lambda, reg.zeta);
  else
    for (Index j = 0; j < theta.size(); ++j) acc += mcp_convex_value(theta(j), lambda, reg.b);
  return acc;
}

/// Norm appearing in the side constraint: psi for the convex penalties,
/// g_lambda for SCAD/MCP.
inline Scalar constraint_norm(const RegularizerKind& reg, Scalar lambda, const Vector& theta) {
  switch (reg.tag) {
    case RegTag::kL1:
      return theta.lpNorm<1>();
    case RegTag::kGroup:
      return penalty_value(reg, 1.0, theta);
    case RegTag::kScad:
    case RegTag::kMcp:
      return convexified_penalty(reg, lambda, reg.concavity(), theta);
  }
  return 0.0;
}

/// Dual norm of the convex regularizers; the non-convex path uses l-infinity
/// directly and must not call this.
inline Scalar dual_norm(const RegularizerKind& reg, const Vector& v) {
  switch (reg.tag) {
    case RegTag::kL1:
      return v.size() == 0 ? 0.0 : v.lpNorm<Eigen::Infinity>();
    case RegTag::kGroup: {
      Scalar best = 0.0;
      for (const auto& g : reg.groups.blocks) {
        Scalar sq = 0.0;
        for (Index j : g) sq += v(j) * v(j);
        best = std::max(best, std::sqrt(sq));
      }
      return best;
    }
    default:
      throw std::invalid_argument("dual_norm: not defined for non-convex regularizers");
  }
}

namespace detail {

// Separable/blockwise prox with total weight w on the prox penalty (psi for
// convex tags, g_lambda for SCAD/MCP). Writes into `out` and returns the
// constraint norm of the result, which the solver hot loop needs anyway.
inline Scalar shrink_into(const RegularizerKind& reg, Scalar lambda, Scalar w, const Vector& z,
                          Vector& out) {
  Scalar norm = 0.0;
  switch (reg.tag) {
    case RegTag::kL1:
      for (Index j = 0; j < z.size(); ++j) {
        out(j) = soft_threshold(z(j), w);
        norm += std::abs(out(j));
      }
      break;
    case RegTag::kGroup: {
      for (const auto& g : reg.groups.blocks) {
        Scalar sq = 0.0;
        for (Index j : g) sq += z(j) * z(j);
        const Scalar block_norm = std::sqrt(sq);
        const Scalar scale = block_norm > w ? (1.0 - w / block_norm) : 0.0;
        for (Index j : g) out(j) = scale * z(j);
        norm += scale * block_norm;
      }
      break;
    }
    case RegTag::kScad:
      for (Index j = 0; j < z.size(); ++j) {
        out(j) = scad_convex_prox1d(z(j), w, lambda, reg.zeta);
        norm += scad_convex_value(out(j), lambda, reg.zeta);
      }
      break;
    case RegTag::kMcp:
      for (Index j = 0; j < z.size(); ++j) {
        out(j) = mcp_convex_prox1d(z(j), w, lambda, reg.b);
        norm += mcp_convex_value(out(j), lambda, reg.b);
      }
      break;
  }
  return norm;
}

inline Vector shrink(const RegularizerKind& reg, Scalar lambda, Scalar w, const Vector& z) {
  Vector out(z.size());
  shrink_into(reg, lambda, w, z, out);
  return out;
}

// Smallest total weight that maps z to zero; upper end of the dual search.
inline Scalar zeroing_weight(const RegularizerKind& reg, const Vector& z) {
  if (reg.tag == RegTag::kGroup) {
    Scalar best = 0.0;
    for (const auto& g : reg.groups.blocks) {
      Scalar sq = 0.0;
      for (Index j : g) sq += z(j) * z(j);
      best = std::max(best, std::sqrt(sq));
    }
    return best;
  }
  return z.size() == 0 ? 0.0 : z.lpNorm<Eigen::Infinity>();
}

// Exact total threshold t solving sum_i max(a_i - t, 0) = target for the
// magnitudes a (the dual map of the soft threshold is piecewise linear in t;
// the root sits between two sorted kinks).
inline Scalar exact_shrink_threshold(std::vector<Scalar>& magnitudes, Scalar target) {
  std::sort(magnitudes.begin(), magnitudes.end(), std::greater<Scalar>());
  Scalar prefix = 0.0;
  const std::size_t count = magnitudes.size();
  for (std::size_t k = 0; k < count; ++k) {
    prefix += magnitudes[k];
    const Scalar t = (prefix - target) / static_cast<Scalar>(k + 1);
    const Scalar next = k + 1 < count ? magnitudes[k + 1] : 0.0;
    if (t >= next - 1e-300 && t <= magnitudes[k]) return std::max(t, 0.0);
  }
  return 0.0;
}

}  // namespace detail

/// Exact minimizer of  (1/2)||theta - z||^2 + beta * lambda * pen(theta)
/// subject to the pen-constraint-norm being at most rho. The unconstrained
/// separable prox is returned when feasible; otherwise the KKT multiplier nu
/// enters as an enlarged threshold beta*lambda + nu found by bisection (the
/// map nu -> constraint norm of the shrink is continuous and non-increasing).
/// `weight` generalizes beta*lambda so the same routine does pure projection.
inline Vector constrained_prox_weighted(const RegularizerKind& reg, Scalar lambda, Scalar weight,
                                        Scalar rho, const Vector& z) {
  if (!(rho > 0.0)) throw std::invalid_argument("constrained_prox: rho must be > 0");
  if (weight < 0.0) throw std::invalid_argument("constrained_prox: negative weight");
  Vector u = detail::shrink(reg, lambda, weight, z);
  const Scalar feas_limit = rho * (1.0 + kFeasSlack);
  if (constraint_norm(reg, lambda, u) <= feas_limit) return u;

  // The dual map nu -> constraint norm of shrink(weight + nu) is piecewise
  // linear for the l1 and grouped norms, so the multiplier has a closed form
  // over the sorted kinks; SCAD/MCP fall back to bisection.
  if (reg.tag == RegTag::kL1 || reg.tag == RegTag::kGroup) {
    std::vector<Scalar> magnitudes;
    if (reg.tag == RegTag::kL1) {
      magnitudes.resize(static_cast<std::size_t>(z.size()));
      for (Index j = 0; j < z.size(); ++j) magnitudes[static_cast<std::size_t>(j)] = std::abs(z(j));
    } else {
      magnitudes.reserve(reg.groups.blocks.size());
      for (const auto& g : reg.groups.blocks) {
        Scalar sq = 0.0;
        for (Index j : g) sq += z(j) * z(j);
        magnitudes.push_back(std::sqrt(sq));
      }
    }
    const Scalar total = detail::exact_shrink_threshold(magnitudes, rho);
    return detail::shrink(reg, lambda, std::max(total, weight), z);
  }

  const Scalar hi_total = detail::zeroing_weight(reg, z);
  Scalar lo = 0.0;                       // infeasible side
  Scalar hi = std::max(hi_total - weight, 1e-30);  // feasible side (shrink == 0)
  const Scalar tol = 1e-12 * std::max(1.0, rho);
  constexpr int kMaxIter = 200;
  for (int iter = 0; iter < kMaxIter; ++iter) {
    const Scalar mid = 0.5 * (lo + hi);
    u = detail::shrink(reg, lambda, weight + mid, z);
    const Scalar norm = constraint_norm(reg, lambda, u);
    if (norm <= feas_limit && rho - norm <= tol) return u;
    if (norm > rho)
      lo = mid;
    else
      hi = mid;
  }
  // Interval collapsed without hitting the tolerance band: fall back to the
  // feasible end if it is meaningful, otherwise report the pathology.
  u = detail::shrink(reg, lambda, weight + hi, z);
  if (constraint_norm(reg, lambda, u) <= feas_limit) return u;
  throw std::runtime_error("constrained_prox: dual root-finding did not converge");
}

inline Vector constrained_prox(const RegularizerKind& reg, Scalar lambda, Scalar beta, Scalar rho,
                               const Vector& z) {
  if (!(beta > 0.0)) throw std::invalid_argument("constrained_prox: beta must be > 0");
  return constrained_prox_weighted(reg, lambda, beta * lambda, rho, z);
}

/// Euclidean projection onto { pen-constraint-norm <= rho }.
inline Vector project_onto_constraint(const RegularizerKind& reg, Scalar lambda, Scalar rho,
                                      const Vector& z) {
  return constrained_prox_weighted(reg, lambda, 0.0, rho, z);
}

// ---------------------------------------------------------------------------
// Subspace decomposition
// ---------------------------------------------------------------------------

/// Model subspace bar(M) given by a coordinate support (l1-type penalties) or
/// a set of whole groups. Carries the subspace compatibility H(bar(M)).
struct SubspaceModel {
  enum class Kind { kCoordinate, kGroup };

  Kind kind = Kind::kCoordinate;
  std::vector<Index> support;  // coordinates, or block indices for kGroup
  GroupMap groups;             // only used when kind == kGroup

  static SubspaceModel coordinates(std::vector<Index> support) {
    SubspaceModel s;
    s.kind = Kind::kCoordinate;
    s.support = std::move(support);
    return s;
  }

  static SubspaceModel group_blocks(std::vector<Index> block_ids, GroupMap map) {
    SubspaceModel s;
    s.kind = Kind::kGroup;
    s.support = std::move(block_ids);
    s.groups = std::move(map);
    return s;
  }

  // Coordinates spanned by the subspace.
  std::vector<Index> coordinate_indices() const {
    if (kind == Kind::kCoordinate) return support;
    std::vector<Index> out;
    for (Index gid : support) {
      const auto& block = groups.blocks.at(static_cast<std::size_t>(gid));
      out.insert(out.end(), block.begin(), block.end());
    }
    return out;
  }
};

/// H(bar(M)): sqrt(r) for coordinate supports, sqrt(s_G) for group supports.
inline Scalar subspace_compatibility(const SubspaceModel& sub) {
  return std::sqrt(static_cast<Scalar>(sub.support.size()));
}

/// Masks theta into (theta_barM, theta_perp) with disjoint supports summing to
/// theta.
inline std::pair<Vector, Vector> subspace_split(const Vector& theta, const SubspaceModel& sub) {
  Vector in_model = Vector::Zero(theta.size());
  for (Index j : sub.coordinate_indices()) in_model(j) = theta(j);
  Vector out_of_model = theta - in_model;
  return {std::move(in_model), std::move(out_of_model)};
}

}  // namespace vrprox
