#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

#include "ultdoa/channel.hpp"
#include "ultdoa/estimator.hpp"

namespace ultdoa {

struct TdoaEntry {
  std::uint32_t trp_id = 0;
  double tdoa_s = 0.0;
};

// Arrival-time differences against one reference TRP, together with the
// anchor geometry needed to solve for the transmitter.
struct TdoaSet {
  std::uint32_t reference_trp = 0;
  std::vector<TdoaEntry> entries;  // includes the reference itself with tdoa 0
  std::map<std::uint32_t, Position3D> trp_positions;
};

struct PositionEstimate {
  Position3D position;
  double residual_norm_s = 0.0;
  int iterations = 0;
  bool converged = false;
  bool ambiguity_flag = false;
};

// Strongest-pilot TRP anchors the differences; ties go to the lowest id so
// the choice is reproducible.
inline std::uint32_t select_reference(const std::vector<ToaMeasurement>& measurements)
{
  if (measurements.empty())
    throw std::invalid_argument("cannot select a reference TRP from zero measurements");
  const ToaMeasurement* best = &measurements.front();
  for (const auto& m : measurements)
    if (m.rsrp_dbfs > best->rsrp_dbfs || (m.rsrp_dbfs == best->rsrp_dbfs && m.trp_id < best->trp_id))
      best = &m;
  return best->trp_id;
}

inline TdoaSet toa_to_tdoa(const std::vector<ToaMeasurement>& measurements, std::uint32_t reference_trp,
                           const std::map<std::uint32_t, Position3D>& trp_positions)
{
  const ToaMeasurement* reference = nullptr;
  for (const auto& m : measurements)
    if (m.trp_id == reference_trp)
      reference = &m;
  if (reference == nullptr)
    throw std::invalid_argument("reference TRP has no measurement");

  TdoaSet set;
  set.reference_trp = reference_trp;
  for (const auto& m : measurements) {
    const auto pos = trp_positions.find(m.trp_id);
    if (pos == trp_positions.end())
      throw std::invalid_argument("no position known for TRP " + std::to_string(m.trp_id));
    if (!set.trp_positions.emplace(m.trp_id, pos->second).second)
      throw std::invalid_argument("duplicate measurement for TRP " + std::to_string(m.trp_id));
    set.entries.push_back({m.trp_id, m.toa_s - reference->toa_s});
  }
  return set;
}

namespace detail {

inline const Position3D& anchor_of(const TdoaSet& set, std::uint32_t trp_id)
{
  const auto it = set.trp_positions.find(trp_id);
  if (it == set.trp_positions.end())
    throw std::invalid_argument("no position known for TRP " + std::to_string(trp_id));
  return it->second;
}

inline Eigen::Vector2d range_gradient(const Position3D& p, const Position3D& anchor)
{
  const double d = distance_m(p, anchor);
  if (d < 1e-12)
    return Eigen::Vector2d::Zero();
  return {(p.x - anchor.x) / d, (p.y - anchor.y) / d};
}

}  // namespace detail

// Range-difference residuals in meters, one row per non-reference entry:
// r_i = c * tdoa_i - (||p - a_i|| - ||p - a_ref||).
inline Eigen::VectorXd tdoa_residuals(const TdoaSet& set, const Position3D& p)
{
  const Position3D& ref = detail::anchor_of(set, set.reference_trp);
  const double ref_range = distance_m(p, ref);
  Eigen::VectorXd r(static_cast<Eigen::Index>(set.entries.size()) - 1);
  Eigen::Index row = 0;
  for (const auto& e : set.entries) {
    if (e.trp_id == set.reference_trp)
      continue;
    const Position3D& anchor = detail::anchor_of(set, e.trp_id);
    r(row++) = kSpeedOfLightMps * e.tdoa_s - (distance_m(p, anchor) - ref_range);
  }
  return r;
}

inline Eigen::MatrixXd tdoa_jacobian(const TdoaSet& set, const Position3D& p)
{
  const Position3D& ref = detail::anchor_of(set, set.reference_trp);
  const Eigen::Vector2d ref_grad = detail::range_gradient(p, ref);
  Eigen::MatrixXd j(static_cast<Eigen::Index>(set.entries.size()) - 1, 2);
  Eigen::Index row = 0;
  for (const auto& e : set.entries) {
    if (e.trp_id == set.reference_trp)
      continue;
    const Eigen::Vector2d g = detail::range_gradient(p, detail::anchor_of(set, e.trp_id));
    j.row(row++) = -(g - ref_grad).transpose();
  }
  return j;
}

namespace detail {

struct NllsOutcome {
  Eigen::Vector2d x;
  double residual_norm_m = 0.0;
  int iterations = 0;
  bool converged = false;
};

// Damped Gauss-Newton on a 2-D unknown: steps that do not reduce the cost are
// rejected and the damping is raised tenfold, accepted steps relax it.
template <typename ResidualFn, typename JacobianFn>
NllsOutcome damped_gauss_newton(Eigen::Vector2d x, ResidualFn&& residual_at, JacobianFn&& jacobian_at,
                                double tol, int max_iter)
{
  NllsOutcome out;
  Eigen::VectorXd r = residual_at(x);
  double cost = r.squaredNorm();
  double lambda = 1e-3;
  int it = 0;
  while (it < max_iter) {
    ++it;
    const Eigen::MatrixXd j = jacobian_at(x);
    const Eigen::Matrix2d jtj = j.transpose() * j;
    const Eigen::Vector2d g = j.transpose() * r;
    Eigen::Vector2d diag = jtj.diagonal();
    const double floor = 1e-12 * std::max(1.0, diag.maxCoeff());
    diag = diag.cwiseMax(floor);
    Eigen::Matrix2d damped = jtj;
    damped(0, 0) += lambda * diag(0);
    damped(1, 1) += lambda * diag(1);

    const Eigen::Vector2d step = damped.ldlt().solve(-g);
    const Eigen::Vector2d trial = x + step;
    const Eigen::VectorXd rt = residual_at(trial);
    const double trial_cost = rt.squaredNorm();
    if (trial_cost <= cost) {
      x = trial;
      r = rt;
      cost = trial_cost;
      lambda = std::max(lambda * 0.1, 1e-12);
      if (step.norm() < tol) {
        out.converged = true;
        break;
      }
    } else {
      lambda *= 10.0;
      if (lambda > 1e12)
        break;
    }
  }
  out.x = x;
  out.residual_norm_m = std::sqrt(cost);
  out.iterations = it;
  return out;
}

inline bool directions_degenerate(const Eigen::MatrixXd& j)
{
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(j);
  const auto& sv = svd.singularValues();
  return sv(0) <= 0.0 || sv(sv.size() - 1) <= 1e-9 * sv(0);
}

// Anchors whose horizontal projections all sit on one line leave the fix
// mirror-ambiguous about that line.
inline bool anchors_collinear(const TdoaSet& set)
{
  Eigen::MatrixXd xy(static_cast<Eigen::Index>(set.entries.size()), 2);
  Eigen::Index row = 0;
  for (const auto& e : set.entries) {
    const Position3D& a = anchor_of(set, e.trp_id);
    xy(row, 0) = a.x;
    xy(row, 1) = a.y;
    ++row;
  }
  const Eigen::RowVector2d mean = xy.colwise().mean();
  xy.rowwise() -= mean;
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(xy);
  const auto& sv = svd.singularValues();
  return sv(sv.size() - 1) <= 1e-9 * std::max(1.0, sv(0));
}

}  // namespace detail

// Linearized range-difference initialization with unknowns (x, y, r_ref).
// Squaring the range equations and subtracting the reference row makes the
// system linear; the altitude is pinned to fixed_z.
inline PositionEstimate ls_position(const TdoaSet& set, double fixed_z)
{
  const Position3D& ref = detail::anchor_of(set, set.reference_trp);
  std::vector<const TdoaEntry*> others;
  for (const auto& e : set.entries)
    if (e.trp_id != set.reference_trp)
      others.push_back(&e);
  if (others.size() < 3)
    throw std::invalid_argument("linear initialization needs at least three non-reference TDoA entries");

  const double ref_sq = ref.x * ref.x + ref.y * ref.y + ref.z * ref.z;
  Eigen::MatrixXd a(static_cast<Eigen::Index>(others.size()), 3);
  Eigen::VectorXd b(static_cast<Eigen::Index>(others.size()));
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    const Position3D& anchor = detail::anchor_of(set, others[static_cast<std::size_t>(i)]->trp_id);
    const double d = kSpeedOfLightMps * others[static_cast<std::size_t>(i)]->tdoa_s;
    const double anchor_sq = anchor.x * anchor.x + anchor.y * anchor.y + anchor.z * anchor.z;
    a(i, 0) = 2.0 * (ref.x - anchor.x);
    a(i, 1) = 2.0 * (ref.y - anchor.y);
    a(i, 2) = -2.0 * d;
    b(i) = d * d - anchor_sq + ref_sq - 2.0 * (ref.z - anchor.z) * fixed_z;
  }

  Eigen::JacobiSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeThinU | Eigen::ComputeThinV);
  svd.setThreshold(1e-9);
  const Eigen::Vector3d sol = svd.solve(b);

  PositionEstimate est;
  est.position = {sol(0), sol(1), fixed_z};
  est.residual_norm_s = tdoa_residuals(set, est.position).norm() / kSpeedOfLightMps;
  est.iterations = 0;
  est.converged = true;
  est.ambiguity_flag = svd.rank() < 3;
  return est;
}

// Damped Gauss-Newton refinement of the horizontal position at fixed_z.
inline PositionEstimate nlls_refine(const TdoaSet& set, const Position3D& initial, double fixed_z,
                                    double tol_m = 1e-9, int max_iter = 100)
{
  if (set.entries.size() < 3)
    throw std::invalid_argument("multilateration needs at least three TRPs");

  const auto residual_at = [&](const Eigen::Vector2d& v) {
    return tdoa_residuals(set, {v(0), v(1), fixed_z});
  };
  const auto jacobian_at = [&](const Eigen::Vector2d& v) {
    return tdoa_jacobian(set, {v(0), v(1), fixed_z});
  };

  const auto outcome =
      detail::damped_gauss_newton(Eigen::Vector2d(initial.x, initial.y), residual_at, jacobian_at, tol_m, max_iter);

  PositionEstimate est;
  est.position = {outcome.x(0), outcome.x(1), fixed_z};
  est.residual_norm_s = outcome.residual_norm_m / kSpeedOfLightMps;
  est.iterations = outcome.iterations;
  est.converged = outcome.converged;
  est.ambiguity_flag = detail::anchors_collinear(set) ||
                       detail::directions_degenerate(jacobian_at(outcome.x));
  return est;
}

// Survey-style check problem: absolute distances from known anchors to the
// unknown point measured at a fixed height.
struct GroundTruthProblem {
  std::vector<Position3D> anchors;
  std::vector<double> distances_m;
  double fixed_z = 1.3;
  std::optional<Position3D> initial_guess;
};

inline Position3D solve_ground_truth(const GroundTruthProblem& problem, double tol_m = 1e-9, int max_iter = 100)
{
  if (problem.anchors.empty())
    throw std::invalid_argument("ground-truth problem needs at least one anchor");
  if (problem.anchors.size() != problem.distances_m.size())
    throw std::invalid_argument("anchor and distance counts differ");
  for (const double d : problem.distances_m)
    if (!(d >= 0.0) || !std::isfinite(d))
      throw std::invalid_argument("distances must be nonnegative and finite");

  Eigen::Vector2d start;
  if (problem.initial_guess) {
    start = {problem.initial_guess->x, problem.initial_guess->y};
  } else {
    start.setZero();
    for (const auto& a : problem.anchors) {
      start(0) += a.x;
      start(1) += a.y;
    }
    start /= static_cast<double>(problem.anchors.size());
  }

  const auto residual_at = [&](const Eigen::Vector2d& v) {
    const Position3D p{v(0), v(1), problem.fixed_z};
    Eigen::VectorXd r(static_cast<Eigen::Index>(problem.anchors.size()));
    for (Eigen::Index i = 0; i < r.size(); ++i)
      r(i) = problem.distances_m[static_cast<std::size_t>(i)] -
             distance_m(p, problem.anchors[static_cast<std::size_t>(i)]);
    return r;
  };
  const auto jacobian_at = [&](const Eigen::Vector2d& v) {
    const Position3D p{v(0), v(1), problem.fixed_z};
    Eigen::MatrixXd j(static_cast<Eigen::Index>(problem.anchors.size()), 2);
    for (Eigen::Index i = 0; i < j.rows(); ++i)
      j.row(i) = -detail::range_gradient(p, problem.anchors[static_cast<std::size_t>(i)]).transpose();
    return j;
  };

  const auto outcome = detail::damped_gauss_newton(start, residual_at, jacobian_at, tol_m, max_iter);
  if (outcome.residual_norm_m > 1e3 * tol_m)
    throw std::runtime_error("measured distances are mutually inconsistent");
  return {outcome.x(0), outcome.x(1), problem.fixed_z};
}

}  // namespace ultdoa
