#include "dcopf/stabset.hpp"

#include "dcopf/error.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>

namespace dcopf {

std::string to_string(StabilityMethod method) {
  return method == StabilityMethod::vertex_lmi ? "vertex" : "single";
}

StabilityMethod parse_stability_method(const std::string& name) {
  if (name == "vertex" || name == "vertex_lmi") return StabilityMethod::vertex_lmi;
  if (name == "single" || name == "single_lmi") return StabilityMethod::single_lmi;
  throw Error("unknown stability method '" + name + "' (expected vertex or single)");
}

double spectral_abscissa(const Eigen::MatrixXd& m) {
  const Eigen::EigenSolver<Eigen::MatrixXd> es(m, false);
  return es.eigenvalues().real().maxCoeff();
}

Eigen::VectorXd energy_scaling(const StateSpaceModel& model) {
  const auto& idx = model.index_map;
  const Eigen::Index nt = idx.num_lines;
  const Eigen::Index n = model.num_states();
  Eigen::VectorXd T = Eigen::VectorXd::Ones(n);
  const Eigen::MatrixXd& A = model.A;
  for (Eigen::Index p = 0; p < nt; ++p) {
    for (Eigen::Index v = nt; v < n; ++v) {
      if (A(p, v) != 0.0) {
        T(p) = 1.0 / std::sqrt(std::abs(A(p, v)));  // sqrt(L)
        break;
      }
    }
  }
  for (Eigen::Index v = nt; v < n; ++v) {
    for (Eigen::Index p = 0; p < nt; ++p) {
      if (A(v, p) != 0.0) {
        T(v) = 1.0 / std::sqrt(std::abs(A(v, p)));  // sqrt(C)
        break;
      }
    }
  }
  return T;
}

bool uses_diagonal_p(const StateSpaceModel& model, const StabilityOptions& options) {
  if (options.diagonal_p) return *options.diagonal_p;
  const auto n = static_cast<std::size_t>(model.num_states());
  return n * (n + 1) / 2 > options.full_p_limit;
}

StabilityMethod auto_method(const StateSpaceModel& model, const StabilityOptions& options) {
  return static_cast<std::size_t>(model.num_loads()) <= options.vertex_cap
             ? StabilityMethod::vertex_lmi
             : StabilityMethod::single_lmi;
}

namespace {

// The model in energy coordinates, divided by the norm of the balanced A.
struct Balanced {
  Eigen::VectorXd T;
  double scale = 1.0;
  Eigen::MatrixXd A;
  std::vector<Eigen::Index> load_row;
  Eigen::VectorXd inv_c;  // 1/C_l per load
  Eigen::Index n = 0;
};

Balanced balance(const StateSpaceModel& model) {
  Balanced b;
  b.n = model.num_states();
  b.T = energy_scaling(model);
  const Eigen::MatrixXd a = b.T.asDiagonal() * model.A * b.T.cwiseInverse().asDiagonal();
  b.scale = a.lpNorm<Eigen::Infinity>();
  if (!(b.scale > 0.0)) b.scale = 1.0;
  b.A = a / b.scale;
  const Eigen::Index off = model.index_map.load_offset();
  b.inv_c.resize(model.num_loads());
  for (Eigen::Index j = 0; j < model.num_loads(); ++j) {
    b.load_row.push_back(off + j);
    b.inv_c(j) = model.D(off + j, j);
  }
  return b;
}

// Balanced, normalized J(delta); the delta terms are diagonal and unchanged by the similarity.
Eigen::MatrixXd balanced_jacobian(const Balanced& b, const Eigen::VectorXd& delta) {
  Eigen::MatrixXd J = b.A;
  for (std::size_t j = 0; j < b.load_row.size(); ++j) {
    const auto r = b.load_row[j];
    const auto jj = static_cast<Eigen::Index>(j);
    J(r, r) += delta(jj) * b.inv_c(jj) / b.scale;
  }
  return J;
}

std::vector<Eigen::VectorXd> box_vertices(const Eigen::VectorXd& lo, const Eigen::VectorXd& hi) {
  std::vector<Eigen::Index> free;
  for (Eigen::Index j = 0; j < lo.size(); ++j)
    if (hi(j) > lo(j)) free.push_back(j);
  std::vector<Eigen::VectorXd> out;
  const std::size_t count = std::size_t{1} << free.size();
  out.reserve(count);
  for (std::size_t mask = 0; mask < count; ++mask) {
    Eigen::VectorXd v = lo;
    for (std::size_t k = 0; k < free.size(); ++k)
      if (mask & (std::size_t{1} << k)) v(free[k]) = hi(free[k]);
    out.push_back(std::move(v));
  }
  return out;
}

LmiOptions lmi_options(const StateSpaceModel& model, const StabilityOptions& options) {
  LmiOptions o;
  o.margin = options.margin;
  o.trace_factor = options.trace_factor;
  o.diagonal_p = uses_diagonal_p(model, options);
  return o;
}

// P = c T P_bal T with c making the smallest eigenvalue 1.
std::pair<Eigen::MatrixXd, double> unbalance(const Balanced& b, const Eigen::MatrixXd& p_bal) {
  Eigen::MatrixXd P = b.T.asDiagonal() * p_bal * b.T.asDiagonal();
  P = 0.5 * (P + P.transpose()).eval();
  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(P, Eigen::EigenvaluesOnly);
  const double c = 1.0 / es.eigenvalues().minCoeff();
  return {c * P, c};
}

double lyapunov_margin(const StateSpaceModel& model, const Eigen::MatrixXd& P,
                       const std::vector<Eigen::VectorXd>& deltas) {
  double worst = -std::numeric_limits<double>::infinity();
  for (const auto& d : deltas) {
    const Eigen::MatrixXd J = jacobian(model, d);
    const Eigen::MatrixXd L = P * J + J.transpose() * P;
    const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(L, Eigen::EigenvaluesOnly);
    worst = std::max(worst, es.eigenvalues().maxCoeff());
  }
  return worst;
}

struct VertexProblem {
  std::vector<Eigen::VectorXd> deltas;
  std::vector<LmiBlock> blocks;
};

VertexProblem vertex_problem(const Balanced& b, const Eigen::VectorXd& lo,
                             const Eigen::VectorXd& hi) {
  VertexProblem vp;
  vp.deltas = box_vertices(lo, hi);
  for (const auto& d : vp.deltas) {
    LmiBlock blk;
    blk.M = balanced_jacobian(b, d);
    vp.blocks.push_back(std::move(blk));
  }
  return vp;
}

struct SingleProblem {
  LmiBlock block;
  Eigen::VectorXd center;
  Eigen::VectorXd half;
  std::vector<Eigen::Index> uncertain;
  double gamma = 1.0;
};

// J = A_hat + B_hat Theta C_hat with B_hat = D (columns of uncertain loads) and
// C_hat = diag(delta_max) E, balanced and then rescaled by a common gamma.
SingleProblem single_problem(const Balanced& b, const Eigen::VectorXd& lo,
                             const Eigen::VectorXd& hi) {
  SingleProblem sp;
  sp.center = 0.5 * (lo + hi);
  sp.half = 0.5 * (hi - lo);
  for (Eigen::Index j = 0; j < lo.size(); ++j)
    if (sp.half(j) > 0.0) sp.uncertain.push_back(j);
  const Eigen::MatrixXd a_hat = balanced_jacobian(b, sp.center);
  const auto k = static_cast<Eigen::Index>(sp.uncertain.size());
  if (k == 0) {
    sp.block.M = a_hat;
    return sp;
  }
  const Eigen::Index n = b.n;
  const double rs = std::sqrt(b.scale);
  Eigen::MatrixXd bh = Eigen::MatrixXd::Zero(n, k);
  Eigen::MatrixXd ch = Eigen::MatrixXd::Zero(k, n);
  for (Eigen::Index q = 0; q < k; ++q) {
    const Eigen::Index j = sp.uncertain[static_cast<std::size_t>(q)];
    const Eigen::Index r = b.load_row[static_cast<std::size_t>(j)];
    bh(r, q) = b.T(r) * b.inv_c(j) / rs;
    ch(q, r) = sp.half(j) / b.T(r) / rs;
  }
  sp.gamma = std::sqrt(ch.norm() / bh.norm());
  bh *= sp.gamma;
  ch /= sp.gamma;

  sp.block.E = Eigen::MatrixXd::Zero(n, n + k);
  sp.block.E.leftCols(n).setIdentity();
  sp.block.M.resize(n, n + k);
  sp.block.M << a_hat, bh;
  Eigen::MatrixXd x = Eigen::MatrixXd::Zero(n + k, n + k);
  x.topLeftCorner(n, n) = ch.transpose() * ch;
  x.bottomRightCorner(k, k) = -Eigen::MatrixXd::Identity(k, k);
  sp.block.lambda_terms.push_back(std::move(x));
  return sp;
}

double single_margin(const StateSpaceModel& model, const SingleProblem& sp,
                     const Eigen::MatrixXd& P, double lambda) {
  const Eigen::MatrixXd a_hat = jacobian(model, sp.center);
  const Eigen::Index n = model.num_states();
  const auto k = static_cast<Eigen::Index>(sp.uncertain.size());
  if (k == 0) {
    const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(P * a_hat + a_hat.transpose() * P,
                                                            Eigen::EigenvaluesOnly);
    return es.eigenvalues().maxCoeff();
  }
  const Eigen::Index off = model.index_map.load_offset();
  Eigen::MatrixXd bh = Eigen::MatrixXd::Zero(n, k);
  Eigen::MatrixXd ch = Eigen::MatrixXd::Zero(k, n);
  for (Eigen::Index q = 0; q < k; ++q) {
    const Eigen::Index j = sp.uncertain[static_cast<std::size_t>(q)];
    bh(off + j, q) = model.D(off + j, j);
    ch(q, off + j) = sp.half(j);
  }
  Eigen::MatrixXd blk(n + k, n + k);
  blk.topLeftCorner(n, n) = P * a_hat + a_hat.transpose() * P + lambda * ch.transpose() * ch;
  blk.topRightCorner(n, k) = P * bh;
  blk.bottomLeftCorner(k, n) = bh.transpose() * P;
  blk.bottomRightCorner(k, k) = -lambda * Eigen::MatrixXd::Identity(k, k);
  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(blk, Eigen::EigenvaluesOnly);
  return es.eigenvalues().maxCoeff();
}

void check_box(const StateSpaceModel& model, const DeltaBox& box) {
  if (box.lo.size() != model.num_loads() || box.hi.size() != model.num_loads())
    throw Error("delta box must have one entry per load");
  if ((box.lo.array() > box.hi.array()).any()) throw Error("delta box has lo > hi");
}

// Oracle for the box alpha * [-delta0, delta0].
class ScaledOracle {
 public:
  ScaledOracle(const StateSpaceModel& model, const Balanced& b, const Eigen::VectorXd& delta0,
               StabilityMethod method, const StabilityOptions& options)
      : model_(model), b_(b), delta0_(delta0), method_(method), lmi_(lmi_options(model, options)) {}

  bool feasible(double alpha, LyapunovWitness* witness) {
    const Eigen::VectorXd hi = alpha * delta0_;
    const Eigen::VectorXd lo = -hi;
    if (method_ == StabilityMethod::vertex_lmi) {
      VertexProblem vp = vertex_problem(b_, lo, hi);
      const LmiResult r = lmi_feasible(vp.blocks, b_.n, lmi_, &hint_);
      if (r.feasible && witness) {
        auto [P, c] = unbalance(b_, r.P);
        (void)c;
        witness->P = P;
        witness->margin = lyapunov_margin(model_, P, vp.deltas);
        witness->lambda = 0.0;
      }
      return r.feasible;
    }
    SingleProblem sp = single_problem(b_, lo, hi);
    const LmiResult r = lmi_feasible({sp.block}, b_.n, lmi_);
    if (r.feasible && witness) {
      auto [P, c] = unbalance(b_, r.P);
      witness->P = P;
      witness->lambda = r.lambda.size() ? c * r.lambda(0) / (sp.gamma * sp.gamma) : 0.0;
      witness->margin = single_margin(model_, sp, P, witness->lambda);
    }
    return r.feasible;
  }

 private:
  const StateSpaceModel& model_;
  const Balanced& b_;
  Eigen::VectorXd delta0_;
  StabilityMethod method_;
  LmiOptions lmi_;
  std::vector<std::size_t> hint_;
};

}  // namespace

StabilityTest vertex_lmi_test(const StateSpaceModel& model, const DeltaBox& box,
                              const StabilityOptions& options) {
  check_box(model, box);
  if (static_cast<std::size_t>(model.num_loads()) > options.vertex_cap)
    throw CapacityError("vertex LMI test needs 2^" + std::to_string(model.num_loads()) +
                        " blocks, above the cap of 2^" + std::to_string(options.vertex_cap) +
                        "; use single_lmi_test");
  const Balanced b = balance(model);
  VertexProblem vp = vertex_problem(b, box.lo, box.hi);
  const LmiResult r = lmi_feasible(vp.blocks, b.n, lmi_options(model, options));
  StabilityTest out;
  out.feasible = r.feasible;
  if (r.feasible) {
    LyapunovWitness w;
    w.P = unbalance(b, r.P).first;
    w.margin = lyapunov_margin(model, w.P, vp.deltas);
    out.witness = std::move(w);
  }
  return out;
}

StabilityTest single_lmi_test(const StateSpaceModel& model, const DeltaBox& box,
                              const StabilityOptions& options) {
  check_box(model, box);
  const Balanced b = balance(model);
  SingleProblem sp = single_problem(b, box.lo, box.hi);
  const LmiResult r = lmi_feasible({sp.block}, b.n, lmi_options(model, options));
  StabilityTest out;
  out.feasible = r.feasible;
  if (r.feasible) {
    LyapunovWitness w;
    auto [P, c] = unbalance(b, r.P);
    w.P = P;
    w.lambda = r.lambda.size() ? c * r.lambda(0) / (sp.gamma * sp.gamma) : 0.0;
    w.margin = single_margin(model, sp, P, w.lambda);
    out.witness = std::move(w);
  }
  return out;
}

GevpResult gevp_max_scaling(const StateSpaceModel& model, const Eigen::VectorXd& delta0,
                            StabilityMethod method, const StabilityOptions& options) {
  if (delta0.size() != model.num_loads()) throw Error("delta0 must have one entry per load");
  if ((delta0.array() <= 0.0).any()) throw Error("delta0 must be positive");
  if (method == StabilityMethod::vertex_lmi &&
      static_cast<std::size_t>(model.num_loads()) > options.vertex_cap)
    throw CapacityError("vertex LMI test above the load cap; use the single LMI");

  const Balanced b = balance(model);
  {
    LmiBlock a;
    a.M = b.A;
    if (!lmi_feasible({a}, b.n, lmi_options(model, options)).feasible)
      throw NotHurwitzError("A has no Lyapunov certificate; no stability set exists");
  }

  ScaledOracle oracle(model, b, delta0, method, options);
  GevpResult out;
  LyapunovWitness witness;

  // Feasible end: the identity in energy coordinates certifies delta_j < 1/R_lj.
  double alpha_lo = std::numeric_limits<double>::infinity();
  for (Eigen::Index j = 0; j < model.num_loads(); ++j) {
    const Eigen::Index r = b.load_row[static_cast<std::size_t>(j)];
    const double g_shunt = -model.A(r, r) / b.inv_c(j);
    alpha_lo = std::min(alpha_lo, 0.99 * g_shunt / delta0(j));
  }
  if (!(alpha_lo > 0.0) || !std::isfinite(alpha_lo)) alpha_lo = 1e-6;
  while (!oracle.feasible(alpha_lo, &witness)) {
    ++out.steps;
    alpha_lo *= 0.1;
    if (alpha_lo < 1e-12)
      throw ConvergenceError("no certified scaling found for the delta box", alpha_lo);
  }

  // Infeasible end: beyond the first alpha making the all-upper vertex non-Hurwitz.
  auto upper_unstable = [&](double alpha) {
    return spectral_abscissa(balanced_jacobian(b, alpha * delta0)) >= 0.0;
  };
  double alpha_hi = alpha_lo;
  double limit = std::max(1e6, alpha_lo * 1e6);
  while (!upper_unstable(alpha_hi) && alpha_hi < limit) alpha_hi *= 2.0;
  if (upper_unstable(alpha_hi)) {
    double a = alpha_hi / 2.0 < alpha_lo ? alpha_lo : alpha_hi / 2.0;
    double c = alpha_hi;
    for (int k = 0; k < 40 && c / a > 1.0 + 1e-9; ++k) {
      const double mid = std::sqrt(a * c);
      (upper_unstable(mid) ? c : a) = mid;
    }
    alpha_hi = c * 1.0001;
  }
  while (oracle.feasible(alpha_hi, &witness)) {
    ++out.steps;
    alpha_lo = alpha_hi;
    alpha_hi *= 2.0;
    if (alpha_hi > limit * 1e6) throw ConvergenceError("GEVP bracket expansion failed", alpha_hi);
  }
  while (alpha_hi / alpha_lo > options.bracket_ratio) {
    ++out.steps;
    const double mid = std::sqrt(alpha_lo * alpha_hi);
    LyapunovWitness w;
    if (oracle.feasible(mid, &w)) {
      alpha_lo = mid;
      witness = std::move(w);
    } else {
      alpha_hi = mid;
    }
  }
  out.beta = 1.0 / alpha_lo;
  out.beta_lo = 1.0 / alpha_hi;
  out.witness = std::move(witness);
  return out;
}

StabilitySet robust_stability_set(const NetworkCase& network, const StateSpaceModel& model,
                                  const std::optional<Eigen::VectorXd>& delta0,
                                  const std::optional<StabilityMethod>& method,
                                  const StabilityOptions& options) {
  const Eigen::VectorXd p_max = network.p_max();
  const Eigen::VectorXd d0 = delta0 ? *delta0 : p_max;
  if ((d0.array() <= 0.0).any())
    throw Error("delta0 must be positive; supply it explicitly when some p_max is zero");
  StabilitySet set;
  set.method = method ? *method : auto_method(model, options);
  set.diagonal_p = uses_diagonal_p(model, options);
  set.delta0 = d0;
  GevpResult g = gevp_max_scaling(model, d0, set.method, options);
  set.beta = g.beta;
  set.beta_lo = g.beta_lo;
  set.bisection_steps = g.steps;
  set.witness = std::move(g.witness);
  set.v_floor = (set.beta * p_max.array() / d0.array()).sqrt().matrix();
  for (Eigen::Index j = 0; j < set.v_floor.size(); ++j)
    if (!(set.v_floor(j) > 0.0)) set.v_floor(j) = std::numeric_limits<double>::min();
  return set;
}

void dump_witness(const StabilitySet& set, const std::filesystem::path& path) {
  nlohmann::json rows = nlohmann::json::array();
  for (Eigen::Index i = 0; i < set.witness.P.rows(); ++i) {
    std::vector<double> row(static_cast<std::size_t>(set.witness.P.cols()));
    for (Eigen::Index j = 0; j < set.witness.P.cols(); ++j)
      row[static_cast<std::size_t>(j)] = set.witness.P(i, j);
    rows.push_back(std::move(row));
  }
  nlohmann::json doc{{"method", to_string(set.method)},
                     {"beta", set.beta},
                     {"margin", set.witness.margin},
                     {"lambda", set.witness.lambda},
                     {"v_floor", std::vector<double>(set.v_floor.data(),
                                                     set.v_floor.data() + set.v_floor.size())},
                     {"P", rows}};
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << doc.dump(1) << '\n';
}

}  // namespace dcopf
