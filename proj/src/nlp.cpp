#include "dcopf/nlp.hpp"

#include "dcopf/error.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <optional>
#include <vector>

namespace dcopf {
namespace {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

constexpr double kSigmaCap = 1e10;
constexpr double kArmijo = 1e-4;

// Internal form: w = (x_free, s), c(w) = 0, l <= w <= u.
// Equality rows give  r_i (g_i(x) - g_lo_i), inequality rows  r_i (g_i(x) - s_i).
class Reformulation {
 public:
  explicit Reformulation(const NlpProblem& p) : p_(p) {
    n_ = p.num_variables();
    m_ = p.num_constraints();
    p.bounds(x_lo_, x_hi_, g_lo_, g_hi_);
    if (x_lo_.size() != n_ || x_hi_.size() != n_ || g_lo_.size() != m_ || g_hi_.size() != m_)
      throw Error("nlp: bound vectors have the wrong size");
    x_fixed_ = p.initial_point();
    if (x_fixed_.size() != n_) throw Error("nlp: initial point has the wrong size");
    for (Index j = 0; j < n_; ++j) {
      if (x_lo_(j) > x_hi_(j)) throw InfeasibleError("nlp: empty variable bounds", p.variable_name(j));
      if (x_lo_(j) == x_hi_(j))
        x_fixed_(j) = x_lo_(j);
      else
        free_.push_back(j);
    }
    for (Index i = 0; i < m_; ++i) {
      if (g_lo_(i) > g_hi_(i)) throw InfeasibleError("nlp: empty constraint bounds", p.constraint_name(i));
      if (g_lo_(i) == g_hi_(i))
        eq_.push_back(i);
      else if (std::isfinite(g_lo_(i)) || std::isfinite(g_hi_(i)))
        ineq_.push_back(i);
    }
    nf_ = static_cast<Index>(free_.size());
    nw_ = nf_ + static_cast<Index>(ineq_.size());
    mc_ = static_cast<Index>(eq_.size() + ineq_.size());
    lo_.resize(nw_);
    hi_.resize(nw_);
    for (Index k = 0; k < nf_; ++k) {
      lo_(k) = x_lo_(free_[k]);
      hi_(k) = x_hi_(free_[k]);
    }
    for (std::size_t k = 0; k < ineq_.size(); ++k) {
      lo_(nf_ + k) = g_lo_(ineq_[k]);
      hi_(nf_ + k) = g_hi_(ineq_[k]);
    }
    row_scale_ = VectorXd::Ones(mc_);
  }

  Index nw() const { return nw_; }
  Index num_free() const { return nf_; }
  Index num_eq() const { return static_cast<Index>(eq_.size()); }
  Index mc() const { return mc_; }
  const VectorXd& lo() const { return lo_; }
  const VectorXd& hi() const { return hi_; }

  VectorXd full_x(const VectorXd& w) const {
    VectorXd x = x_fixed_;
    for (Index k = 0; k < nf_; ++k) x(free_[k]) = w(k);
    return x;
  }

  // Gradient-based scaling from the starting point.
  void set_scaling(const VectorXd& w, double limit) {
    const VectorXd x = full_x(w);
    const VectorXd grad = p_.objective_gradient(x);
    double gmax = 0.0;
    for (Index k = 0; k < nf_; ++k) gmax = std::max(gmax, std::abs(grad(free_[k])));
    // Small objectives are scaled up to unit gradient so the barrier cannot swamp them.
    if (gmax > limit)
      obj_scale_ = limit / gmax;
    else if (gmax > 0.0 && gmax < 1.0)
      obj_scale_ = std::min(1.0 / gmax, 1e4);
    else
      obj_scale_ = 1.0;
    const MatrixXd jac = p_.constraint_jacobian(x);
    for (Index r = 0; r < mc_; ++r) {
      const Index i = row(r);
      double rmax = 0.0;
      for (Index k = 0; k < nf_; ++k) rmax = std::max(rmax, std::abs(jac(i, free_[k])));
      row_scale_(r) = rmax > limit ? limit / rmax : 1.0;
    }
  }

  double objective(const VectorXd& w) const { return obj_scale_ * p_.objective(full_x(w)); }

  VectorXd gradient(const VectorXd& w) const {
    const VectorXd g = p_.objective_gradient(full_x(w));
    VectorXd out = VectorXd::Zero(nw_);
    for (Index k = 0; k < nf_; ++k) out(k) = obj_scale_ * g(free_[k]);
    return out;
  }

  VectorXd residual(const VectorXd& w) const {
    const VectorXd g = p_.constraints(full_x(w));
    VectorXd c(mc_);
    for (std::size_t r = 0; r < eq_.size(); ++r) c(r) = row_scale_(r) * (g(eq_[r]) - g_lo_(eq_[r]));
    const Index ne = static_cast<Index>(eq_.size());
    for (std::size_t k = 0; k < ineq_.size(); ++k)
      c(ne + k) = row_scale_(ne + k) * (g(ineq_[k]) - w(nf_ + k));
    return c;
  }

  MatrixXd jacobian(const VectorXd& w) const {
    const MatrixXd jac = p_.constraint_jacobian(full_x(w));
    MatrixXd out = MatrixXd::Zero(mc_, nw_);
    const Index ne = static_cast<Index>(eq_.size());
    for (Index r = 0; r < mc_; ++r) {
      const Index i = row(r);
      for (Index k = 0; k < nf_; ++k) out(r, k) = row_scale_(r) * jac(i, free_[k]);
      if (r >= ne) out(r, nf_ + (r - ne)) = -row_scale_(r);
    }
    return out;
  }

  MatrixXd hessian(const VectorXd& w, const VectorXd& y) const {
    VectorXd lambda = VectorXd::Zero(m_);
    for (Index r = 0; r < mc_; ++r) lambda(row(r)) = row_scale_(r) * y(r);
    const MatrixXd h = p_.lagrangian_hessian(full_x(w), obj_scale_, lambda);
    MatrixXd out = MatrixXd::Zero(nw_, nw_);
    for (Index a = 0; a < nf_; ++a)
      for (Index b = 0; b < nf_; ++b) out(a, b) = h(free_[a], free_[b]);
    return out;
  }

  // Starting point: x from the problem, slacks from g(x), both pushed inside the bounds.
  VectorXd start(double push) const {
    VectorXd w(nw_);
    for (Index k = 0; k < nf_; ++k) w(k) = x_fixed_(free_[k]);
    const VectorXd g = p_.constraints(full_x(w));
    for (std::size_t k = 0; k < ineq_.size(); ++k) w(nf_ + k) = g(ineq_[k]);
    for (Index k = 0; k < nw_; ++k) {
      const double l = lo_(k), u = hi_(k);
      double pl = std::isfinite(l) ? push * std::max(1.0, std::abs(l)) : 0.0;
      double pu = std::isfinite(u) ? push * std::max(1.0, std::abs(u)) : 0.0;
      if (std::isfinite(l) && std::isfinite(u)) {
        pl = std::min(pl, push * (u - l));
        pu = std::min(pu, push * (u - l));
      }
      if (std::isfinite(l)) w(k) = std::max(w(k), l + pl);
      if (std::isfinite(u)) w(k) = std::min(w(k), u - pu);
    }
    return w;
  }

  // Unscaled multipliers and bound duals on the original variables.
  void unscale(const VectorXd& y, const VectorXd& zl, const VectorXd& zu, NlpResult& out) const {
    out.lambda = VectorXd::Zero(m_);
    for (Index r = 0; r < mc_; ++r) out.lambda(row(r)) = row_scale_(r) * y(r) / obj_scale_;
    out.z_lo = VectorXd::Zero(n_);
    out.z_hi = VectorXd::Zero(n_);
    for (Index k = 0; k < nf_; ++k) {
      out.z_lo(free_[k]) = zl(k) / obj_scale_;
      out.z_hi(free_[k]) = zu(k) / obj_scale_;
    }
  }

  // Largest unscaled violation, and the name of its row or variable.
  double violation(const VectorXd& x, std::string* name) const {
    const VectorXd g = p_.constraints(x);
    double worst = 0.0;
    auto consider = [&](double v, const std::string& label) {
      if (v > worst) {
        worst = v;
        if (name) *name = label;
      }
    };
    for (Index i = 0; i < m_; ++i) {
      const double v = std::max(g_lo_(i) - g(i), g(i) - g_hi_(i));
      if (v > worst) consider(v, p_.constraint_name(i));
    }
    for (Index j = 0; j < n_; ++j) {
      const double v = std::max(x_lo_(j) - x(j), x(j) - x_hi_(j));
      if (v > worst) consider(v, p_.variable_name(j));
    }
    return worst;
  }

  double obj_scale() const { return obj_scale_; }

 private:
  Index row(Index r) const {
    const Index ne = static_cast<Index>(eq_.size());
    return r < ne ? eq_[r] : ineq_[r - ne];
  }

  const NlpProblem& p_;
  Index n_ = 0, m_ = 0, nf_ = 0, nw_ = 0, mc_ = 0;
  VectorXd x_lo_, x_hi_, g_lo_, g_hi_, x_fixed_, lo_, hi_, row_scale_;
  std::vector<Index> free_, eq_, ineq_;
  double obj_scale_ = 1.0;
};

struct Errors {
  double dual = 0.0;
  double primal = 0.0;
  double compl_ = 0.0;
  double max() const { return std::max({dual, primal, compl_}); }
};

}  // namespace

NlpResult nlp_solve(const NlpProblem& problem, const NlpOptions& opt) {
  Reformulation rf(problem);
  const Index nw = rf.nw();
  const Index mc = rf.mc();
  const VectorXd& lo = rf.lo();
  const VectorXd& hi = rf.hi();

  VectorXd w = rf.start(opt.bound_push);
  rf.set_scaling(w, opt.gradient_scale_limit);

  std::vector<bool> has_lo(nw), has_hi(nw);
  for (Index k = 0; k < nw; ++k) {
    has_lo[k] = std::isfinite(lo(k));
    has_hi[k] = std::isfinite(hi(k));
  }
  // Bound duals start on the central path, z s = mu.
  VectorXd zl = VectorXd::Zero(nw), zu = VectorXd::Zero(nw);
  for (Index k = 0; k < nw; ++k) {
    if (has_lo[k]) zl(k) = std::min(1.0, opt.mu_init / (w(k) - lo(k)));
    if (has_hi[k]) zu(k) = std::min(1.0, opt.mu_init / (hi(k) - w(k)));
  }
  VectorXd y = VectorXd::Zero(mc);

  double mu = opt.mu_init;
  const double mu_min = std::min(opt.tolerance, opt.complementarity_tolerance) / 10.0;
  double nu = 1.0;  // l1 penalty
  double delta_last = 0.0;

  auto slack_lo = [&](const VectorXd& v) {
    VectorXd d = VectorXd::Ones(nw);
    for (Index k = 0; k < nw; ++k)
      if (has_lo[k]) d(k) = v(k) - lo(k);
    return d;
  };
  auto slack_hi = [&](const VectorXd& v) {
    VectorXd d = VectorXd::Ones(nw);
    for (Index k = 0; k < nw; ++k)
      if (has_hi[k]) d(k) = hi(k) - v(k);
    return d;
  };
  auto barrier = [&](const VectorXd& v, double f) {
    double phi = f;
    for (Index k = 0; k < nw; ++k) {
      if (has_lo[k]) phi -= mu * std::log(v(k) - lo(k));
      if (has_hi[k]) phi -= mu * std::log(hi(k) - v(k));
    }
    return phi;
  };

  auto errors = [&](const VectorXd& grad, const VectorXd& c, const MatrixXd& jac, double target) {
    const VectorXd dl = slack_lo(w), du = slack_hi(w);
    const VectorXd rd = grad + jac.transpose() * y - zl + zu;
    const double smax = 100.0;
    const double zsum = zl.lpNorm<1>() + zu.lpNorm<1>();
    const double sd = std::max(smax, (y.lpNorm<1>() + zsum) / std::max<Index>(1, nw + mc)) / smax;
    const double sc = std::max(smax, zsum / std::max<Index>(1, nw)) / smax;
    Errors e;
    e.dual = rd.size() ? rd.lpNorm<Eigen::Infinity>() / sd : 0.0;
    e.primal = c.size() ? c.lpNorm<Eigen::Infinity>() : 0.0;
    double comp = 0.0;
    for (Index k = 0; k < nw; ++k) {
      if (has_lo[k]) comp = std::max(comp, std::abs(dl(k) * zl(k) - target));
      if (has_hi[k]) comp = std::max(comp, std::abs(du(k) * zu(k) - target));
    }
    e.compl_ = comp / sc;
    return e;
  };

  double best_primal = kInf;
  int stall = 0;
  int ls_failures = 0;
  int iter = 0;

  for (;; ++iter) {
    const double f = rf.objective(w);
    const VectorXd grad = rf.gradient(w);
    const VectorXd c = rf.residual(w);
    const MatrixXd jac = rf.jacobian(w);
    if (!std::isfinite(f) || !grad.allFinite() || !c.allFinite() || !jac.allFinite())
      throw ConvergenceError("nlp: non-finite function value", kInf);

    const Errors e0 = errors(grad, c, jac, 0.0);
    if (opt.verbose)
      std::cerr << "nlp it " << iter << " f=" << f << " dual=" << e0.dual << " primal=" << e0.primal
                << " compl=" << e0.compl_ << " mu=" << mu << " nu=" << nu << "\n";
    if (e0.dual <= opt.tolerance && e0.primal <= opt.constraint_tolerance &&
        e0.compl_ <= opt.complementarity_tolerance) {
      NlpResult out;
      out.x = rf.full_x(w);
      out.objective = problem.objective(out.x);
      rf.unscale(y, zl, zu, out);
      out.stationarity = e0.dual;
      out.primal_infeasibility = rf.violation(out.x, nullptr);
      out.complementarity = e0.compl_;
      out.kkt_residual = e0.max();
      out.iterations = iter;
      return out;
    }

    std::string binding;
    if (iter >= opt.max_iterations) {
      const double viol = rf.violation(rf.full_x(w), &binding);
      if (e0.primal > 1e3 * opt.constraint_tolerance)
        throw InfeasibleError("nlp: iteration limit reached while infeasible", binding);
      throw ConvergenceError("nlp: iteration limit reached", std::max(e0.max(), viol));
    }

    // Stall away from feasibility is treated as local infeasibility.
    if (e0.primal < 0.99 * best_primal) {
      best_primal = e0.primal;
      stall = 0;
    } else if (e0.primal > 1e3 * opt.constraint_tolerance && ++stall > 60) {
      rf.violation(rf.full_x(w), &binding);
      throw InfeasibleError("nlp: no progress towards feasibility", binding);
    }

    // Monotone barrier update.
    while (mu > mu_min && errors(grad, c, jac, mu).max() <= 10.0 * mu) {
      mu = std::max(mu_min, std::min(0.2 * mu, std::pow(mu, 1.5)));
      nu = std::min(nu, std::max(1.0, 1.01 * y.lpNorm<Eigen::Infinity>()));
    }

    const VectorXd dl = slack_lo(w), du = slack_hi(w);
    VectorXd sigma = VectorXd::Zero(nw);
    VectorXd bgrad = grad;
    for (Index k = 0; k < nw; ++k) {
      if (has_lo[k]) {
        sigma(k) += zl(k) / dl(k);
        bgrad(k) -= mu / dl(k);
      }
      if (has_hi[k]) {
        sigma(k) += zu(k) / du(k);
        bgrad(k) += mu / du(k);
      }
    }
    const MatrixXd hess = rf.hessian(w, y);
    if (!hess.allFinite()) throw ConvergenceError("nlp: non-finite Hessian", kInf);

    // Slacks of the inequality rows are eliminated, leaving
    //   [Hx + Jiᵀ Ds Ji, Jeᵀ; Je, 0]  on (x, y_E),  Ds = (Sigma_s + dw) / r^2.
    // Its inertia is corrected by testing  Hc + Jeᵀ Je / rho  for definiteness, which has
    // the required sign pattern iff [Hc, Jeᵀ; Je, -rho I] does.
    const Index nf = rf.num_free();
    const Index ne = rf.num_eq();
    const Index ni = mc - ne;
    const MatrixXd je = jac.topLeftCorner(ne, nf);
    const MatrixXd ji = jac.block(ne, 0, ni, nf);
    const VectorXd rs = -jac.block(ne, nf, ni, ni).diagonal();  // row scales of the inequalities
    const double rho = 1e-6;
    const MatrixXd jtj = je.transpose() * je / rho;
    double delta = 0.0;
    MatrixXd hc;
    VectorXd ds_diag;
    for (int attempt = 0;; ++attempt) {
      ds_diag = (sigma.tail(ni).array() + delta) / rs.array().square();
      hc = hess.topLeftCorner(nf, nf);
      hc.diagonal() += sigma.head(nf) + VectorXd::Constant(nf, delta);
      hc.noalias() += ji.transpose() * ds_diag.asDiagonal() * ji;
      Eigen::LLT<MatrixXd> llt(hc + jtj);
      if (llt.info() == Eigen::Success) break;
      if (attempt > 60) throw ConvergenceError("nlp: inertia correction failed", e0.max());
      delta = delta == 0.0 ? (delta_last == 0.0 ? 1e-4 : std::max(1e-20, delta_last / 3.0))
                           : (delta_last == 0.0 ? 100.0 * delta : 8.0 * delta);
    }
    delta_last = delta > 0.0 ? delta : delta_last;

    MatrixXd kkt = MatrixXd::Zero(nf + ne, nf + ne);
    kkt.topLeftCorner(nf, nf) = hc;
    kkt.topRightCorner(nf, ne) = je.transpose();
    kkt.bottomLeftCorner(ne, nf) = je;
    Eigen::PartialPivLU<MatrixXd> lu(kkt);
    MatrixXd kkt_reg;
    std::optional<Eigen::PartialPivLU<MatrixXd>> lu_reg;
    // Solves the full Newton system for right-hand side (-rw, -cc) in w and y space.
    auto solve = [&](const VectorXd& rw, const VectorXd& cc, VectorXd& dw_out, VectorXd& dy_out) {
      const VectorXd sig_s = sigma.tail(ni).array() + delta;
      // ds = (Ji dx + ci) / r;  dy_I = ((Sigma_s + dw) ds + rw_s) / r
      VectorXd rhs(nf + ne);
      rhs.head(nf) = -rw.head(nf) -
                     ji.transpose() * ((sig_s.cwiseProduct(cc.tail(ni).cwiseQuotient(rs)) + rw.tail(ni))
                                           .cwiseQuotient(rs));
      rhs.tail(ne) = -cc.head(ne);
      VectorXd sol = lu.solve(rhs);
      if (!sol.allFinite() || (kkt * sol - rhs).lpNorm<Eigen::Infinity>() >
                                  1e-6 * std::max(1.0, rhs.lpNorm<Eigen::Infinity>())) {
        if (!lu_reg) {
          kkt_reg = kkt;
          kkt_reg.bottomRightCorner(ne, ne).diagonal().array() -= 1e-8 * std::pow(mu, 0.25);
          lu_reg.emplace(kkt_reg);
        }
        sol = lu_reg->solve(rhs);
      }
      const VectorXd dx = sol.head(nf);
      const VectorXd ds = (ji * dx + cc.tail(ni)).cwiseQuotient(rs);
      dw_out.resize(nw);
      dw_out << dx, ds;
      dy_out.resize(mc);
      dy_out << sol.tail(ne), (sig_s.cwiseProduct(ds) + rw.tail(ni)).cwiseQuotient(rs);
    };
    const VectorXd rw = bgrad + jac.transpose() * y;
    VectorXd dw, dy;
    solve(rw, c, dw, dy);
    if (!dw.allFinite() || !dy.allFinite()) {
      std::string binding;
      rf.violation(rf.full_x(w), &binding);
      if (e0.primal > 1e3 * opt.constraint_tolerance)
        throw InfeasibleError("nlp: singular Newton system while infeasible", binding);
      throw SingularMatrixError("nlp: KKT system is singular");
    }

    // Fraction to the boundary.
    const double tau = std::max(0.99, 1.0 - mu);
    auto max_step = [&](const VectorXd& v, const VectorXd& dv) {
      double a = 1.0;
      for (Index k = 0; k < nw; ++k) {
        if (has_lo[k] && dv(k) < 0.0) a = std::min(a, -tau * (v(k) - lo(k)) / dv(k));
        if (has_hi[k] && dv(k) > 0.0) a = std::min(a, tau * (hi(k) - v(k)) / dv(k));
      }
      return a;
    };
    const double alpha_max = max_step(w, dw);

    // l1 merit; penalty large enough for the quadratic model to predict descent.
    const double cnorm = c.lpNorm<1>();
    const double gdw = bgrad.dot(dw);
    if (cnorm > 0.0) {
      const VectorXd dx = dw.head(nf), dsl = dw.tail(ni);
      const double curv = std::max(
          0.0, 0.5 * (dx.dot(hess.topLeftCorner(nf, nf) * dx) + dx.dot(sigma.head(nf).cwiseProduct(dx)) +
                      dsl.dot(sigma.tail(ni).cwiseProduct(dsl))));
      const double needed = (gdw + curv) / (0.9 * cnorm);
      if (nu < needed) nu = needed + 1.0;
      // Drop a penalty left far above the current requirement by an early bad step.
      const double target = std::max({1.0, needed + 1.0, 1.01 * (y + dy).lpNorm<Eigen::Infinity>()});
      if (nu > 1e4 * target) nu = target;
    }
    // A penalty that must grow without bound signals a locally infeasible problem.
    if (nu > 1e10 && e0.primal > 1e3 * opt.constraint_tolerance) {
      std::string binding;
      rf.violation(rf.full_x(w), &binding);
      throw InfeasibleError("nlp: penalty diverged while infeasible", binding);
    }
    const double phi0 = barrier(w, f) + nu * cnorm;
    const double dphi = gdw - nu * cnorm;

    auto merit = [&](const VectorXd& v) {
      for (Index k = 0; k < nw; ++k) {
        if (has_lo[k] && v(k) <= lo(k)) return kInf;
        if (has_hi[k] && v(k) >= hi(k)) return kInf;
      }
      const double fv = rf.objective(v);
      const VectorXd cv = rf.residual(v);
      if (!std::isfinite(fv) || !cv.allFinite()) return kInf;
      return barrier(v, fv) + nu * cv.lpNorm<1>();
    };

    double alpha = alpha_max;
    bool accepted = false;
    VectorXd trial;
    for (int bt = 0; bt < 40; ++bt) {
      trial = w + alpha * dw;
      const double phi = merit(trial);
      if (phi <= phi0 + kArmijo * alpha * std::min(dphi, 0.0) ||
          (dphi >= 0.0 && phi <= phi0 + 1e-12 * std::abs(phi0))) {
        accepted = true;
        break;
      }
      // One second-order correction on the full step.
      if (bt == 0 && mc > 0) {
        const VectorXd ct = rf.residual(trial);
        if (ct.allFinite() && ct.lpNorm<1>() >= cnorm) {
          VectorXd dsoc, dysoc;
          solve(rw, alpha * c + ct, dsoc, dysoc);
          const double a_soc = max_step(w, dsoc);
          const VectorXd wsoc = w + a_soc * dsoc;
          if (merit(wsoc) <= phi0 + kArmijo * alpha * std::min(dphi, 0.0)) {
            trial = wsoc;
            alpha = a_soc;
            dw = dsoc;
            accepted = true;
            break;
          }
        }
      }
      alpha *= 0.5;
      if (alpha < 1e-14) break;
    }
    if (!accepted) {
      if (++ls_failures > 8) {
        rf.violation(rf.full_x(w), &binding);
        if (e0.primal > 1e3 * opt.constraint_tolerance)
          throw InfeasibleError("nlp: line search failed while infeasible", binding);
        throw ConvergenceError("nlp: line search failed", e0.max());
      }
      // Take a short step anyway so the barrier and multipliers can move.
      alpha = std::min(alpha_max, 1e-4);
      trial = w + alpha * dw;
    } else {
      ls_failures = 0;
    }

    // Bound multiplier steps.
    const VectorXd dzl = [&] {
      VectorXd d = VectorXd::Zero(nw);
      for (Index k = 0; k < nw; ++k)
        if (has_lo[k]) d(k) = mu / dl(k) - zl(k) - zl(k) / dl(k) * dw(k);
      return d;
    }();
    const VectorXd dzu = [&] {
      VectorXd d = VectorXd::Zero(nw);
      for (Index k = 0; k < nw; ++k)
        if (has_hi[k]) d(k) = mu / du(k) - zu(k) + zu(k) / du(k) * dw(k);
      return d;
    }();
    double alpha_z = 1.0;
    for (Index k = 0; k < nw; ++k) {
      if (has_lo[k] && dzl(k) < 0.0) alpha_z = std::min(alpha_z, -tau * zl(k) / dzl(k));
      if (has_hi[k] && dzu(k) < 0.0) alpha_z = std::min(alpha_z, -tau * zu(k) / dzu(k));
    }

    w = trial;
    y += alpha * dy;
    zl += alpha_z * dzl;
    zu += alpha_z * dzu;

    const VectorXd nl = slack_lo(w), nh = slack_hi(w);
    for (Index k = 0; k < nw; ++k) {
      if (has_lo[k]) zl(k) = std::clamp(zl(k), mu / (kSigmaCap * nl(k)), kSigmaCap * mu / nl(k));
      if (has_hi[k]) zu(k) = std::clamp(zu(k), mu / (kSigmaCap * nh(k)), kSigmaCap * mu / nh(k));
    }
  }
}

}  // namespace dcopf
