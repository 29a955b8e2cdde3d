#include "dcopf/robustopf.hpp"

#include "dcopf/error.hpp"

#include <algorithm>
#include <cmath>

namespace dcopf {
namespace {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

// Per-unit bases: voltage on the largest vref_max, conductance on the largest
// diagonal entry of Y_ll, power = V^2 G.
struct Bases {
  double v = 1.0;
  double g = 1.0;
  double p() const { return v * v * g; }
};

Bases bases(const NetworkCase& network, const GridEquations& ge) {
  Bases b;
  b.v = network.vref_max().maxCoeff();
  b.g = ge.Y_ll.diagonal().cwiseAbs().maxCoeff();
  return b;
}

// Nominal power flow rows  x_v (Y_ll x_v + Y_ls x_r) - p/V^2, divided by G.
struct PowerFlowRows {
  MatrixXd yll, yls;  // divided by G
  VectorXd p;         // p / P_base

  PowerFlowRows(const GridEquations& ge, const Bases& b, const VectorXd& p_watt)
      : yll(ge.Y_ll / b.g), yls(ge.Y_ls / b.g), p(p_watt / b.p()) {}

  VectorXd value(const VectorXd& xr, const VectorXd& xv) const {
    return xv.cwiseProduct(yll * xv + yls * xr) - p;
  }
  // Columns: [x_r, x_v].
  void jacobian(const VectorXd& xr, const VectorXd& xv, Eigen::Ref<MatrixXd> jr,
                Eigen::Ref<MatrixXd> jv) const {
    jr = xv.asDiagonal() * yls;
    jv = xv.asDiagonal() * yll;
    jv.diagonal() += yll * xv + yls * xr;
  }
  void hessian(const VectorXd& lambda, Eigen::Ref<MatrixXd> hvv, Eigen::Ref<MatrixXd> hvr) const {
    hvv += lambda.asDiagonal() * yll;
    hvv += yll.transpose() * lambda.asDiagonal();
    hvr += lambda.asDiagonal() * yls;
  }
};

// Total losses at nominal load, quadratic in (x_r, x_v), divided by P_base.
struct LossObjective {
  MatrixXd hrr, hrv;  // f = 0.5 x_r' hrr x_r + x_r' hrv x_v - sum p
  double const_term = 0.0;

  LossObjective(const NetworkCase& network, const GridEquations& ge, const Bases& b) {
    const VectorXd gs = ge.source_resistance.cwiseInverse() / b.g;
    const MatrixXd gfv = gs.asDiagonal() * ge.source_from_vref;
    hrr = 2.0 * MatrixXd(gs.asDiagonal()) - gfv - gfv.transpose();
    hrv = -(gs.asDiagonal() * ge.source_from_load);
    const_term = -network.p_nominal().sum() / b.p();
  }
  double value(const VectorXd& xr, const VectorXd& xv) const {
    return 0.5 * xr.dot(hrr * xr) + xr.dot(hrv * xv) + const_term;
  }
};

// Cost as declared by the case, in per-unit.
class Cost {
 public:
  Cost(const NetworkCase& network, const GridEquations& ge, const Bases& b)
      : kind_(network.cost.kind), loss_(network, ge, b) {
    const Index ns = network.num_sources();
    if (kind_ == CostKind::quadratic) {
      q_ = MatrixXd::Zero(ns, ns);
      c_ = VectorXd::Zero(ns);
      for (Index i = 0; i < ns; ++i) {
        if (!network.cost.linear.empty()) c_(i) = network.cost.linear[static_cast<std::size_t>(i)] * b.v;
        for (Index k = 0; k < ns; ++k)
          if (!network.cost.quadratic.empty())
            q_(i, k) = network.cost.quadratic[static_cast<std::size_t>(i * ns + k)] * b.v * b.v;
      }
      q_ = 0.5 * (q_ + q_.transpose());
      const double scale = std::max({1.0, q_.cwiseAbs().maxCoeff(), c_.cwiseAbs().maxCoeff()});
      unit_ = scale;
      q_ /= scale;
      c_ /= scale;
    } else {
      unit_ = b.p();
    }
  }

  double value(const VectorXd& xr, const VectorXd& xv) const {
    if (kind_ == CostKind::quadratic) return xr.dot(q_ * xr) + c_.dot(xr);
    return loss_.value(xr, xv);
  }
  void gradient(const VectorXd& xr, const VectorXd& xv, Eigen::Ref<VectorXd> gr,
                Eigen::Ref<VectorXd> gv) const {
    if (kind_ == CostKind::quadratic) {
      gr = 2.0 * q_ * xr + c_;
      gv.setZero();
      return;
    }
    gr = loss_.hrr * xr + loss_.hrv * xv;
    gv = loss_.hrv.transpose() * xr;
  }
  void hessian(double sigma, Eigen::Ref<MatrixXd> hrr, Eigen::Ref<MatrixXd> hrv) const {
    if (kind_ == CostKind::quadratic) {
      hrr += 2.0 * sigma * q_;
      return;
    }
    hrr += sigma * loss_.hrr;
    hrv += sigma * loss_.hrv;
  }
  /// Per-unit cost to physical units.
  double unit() const { return unit_; }

 private:
  CostKind kind_;
  LossObjective loss_;
  MatrixXd q_;
  VectorXd c_;
  double unit_ = 1.0;
};

// s = Z q with Z = diag(w)^-1 Y_ll^-1 diag(w)^-1 and w = M x_r, all per-unit.
class NormalizedProduct {
 public:
  NormalizedProduct(const GridEquations& ge, const Bases& b, const VectorXd& q_watt)
      : yinv_(ge.Y_ll_inv * b.g), m_(-(ge.Y_ll_inv * ge.Y_ls)), q_(q_watt / b.p()) {}

  const MatrixXd& m() const { return m_; }

  VectorXd value(const VectorXd& xr) const {
    const VectorXd w = m_ * xr;
    return (yinv_ * q_.cwiseQuotient(w)).cwiseQuotient(w);
  }
  // d s / d x_r.
  MatrixXd jacobian(const VectorXd& xr) const {
    const VectorXd w = m_ * xr;
    const VectorXd s = value(xr);
    // ds_j/dw_m = -delta_jm s_j / w_j - Yinv_jm q_m / (w_j w_m^2)
    MatrixXd dw = -(w.cwiseInverse().asDiagonal() * yinv_ *
                    q_.cwiseQuotient(w.cwiseAbs2()).asDiagonal());
    dw.diagonal() -= s.cwiseQuotient(w);
    return dw * m_;
  }
  // sum_j mu_j d^2 s_j / d x_r^2.
  MatrixXd weighted_hessian(const VectorXd& xr, const VectorXd& mu) const {
    const Index n = m_.rows();
    const VectorXd w = m_ * xr;
    const VectorXd g = yinv_ * q_.cwiseQuotient(w);  // s = g / w
    MatrixXd h = MatrixXd::Zero(n, n);
    // second derivative of 1/w_j times g_j
    h.diagonal() += 2.0 * mu.cwiseProduct(g).cwiseQuotient(w.array().cube().matrix());
    // cross terms d(1/w_j) dg_j
    const MatrixXd t = mu.cwiseQuotient(w.cwiseAbs2()).asDiagonal() * yinv_ *
                       q_.cwiseQuotient(w.cwiseAbs2()).asDiagonal();
    h += t + t.transpose();
    // (1/w_j) second derivative of g_j
    const VectorXd col = yinv_.transpose() * mu.cwiseQuotient(w);
    h.diagonal() += 2.0 * col.cwiseProduct(q_).cwiseQuotient(w.array().cube().matrix());
    return m_.transpose() * h * m_;
  }

 private:
  MatrixXd yinv_;
  MatrixXd m_;
  VectorXd q_;
};

std::string load_label(const GridEquations& ge, Index j) {
  return ge.load_order[static_cast<std::size_t>(j)];
}

class NominalProblem : public NlpProblem {
 public:
  NominalProblem(const NetworkCase& network, const GridEquations& ge, const VectorXd& vref_init)
      : network_(network),
        ge_(ge),
        b_(bases(network, ge)),
        pf_(ge, b_, network.p_nominal()),
        cost_(network, ge, b_),
        vref_init_(vref_init) {
    ns_ = network.num_sources();
    nl_ = network.num_loads();
  }

  Index num_variables() const override { return ns_ + nl_; }
  Index num_constraints() const override { return nl_; }
  void bounds(VectorXd& xl, VectorXd& xh, VectorXd& gl, VectorXd& gh) const override {
    xl.resize(ns_ + nl_);
    xh.resize(ns_ + nl_);
    xl << network_.vref_min() / b_.v, network_.v_min() / b_.v;
    xh << network_.vref_max() / b_.v, network_.v_max() / b_.v;
    gl = VectorXd::Zero(nl_);
    gh = VectorXd::Zero(nl_);
  }
  VectorXd initial_point() const override {
    VectorXd x(ns_ + nl_);
    x.head(ns_) = vref_init_ / b_.v;
    try {
      x.tail(nl_) = solve_pf(ge_, vref_init_, network_.p_nominal()).v_load / b_.v;
    } catch (const Error&) {
      x.tail(nl_) = open_circuit(ge_, vref_init_) / b_.v;
    }
    return x;
  }
  double objective(const VectorXd& x) const override {
    return cost_.value(x.head(ns_), x.tail(nl_));
  }
  VectorXd objective_gradient(const VectorXd& x) const override {
    VectorXd g(ns_ + nl_);
    cost_.gradient(x.head(ns_), x.tail(nl_), g.head(ns_), g.tail(nl_));
    return g;
  }
  VectorXd constraints(const VectorXd& x) const override {
    return pf_.value(x.head(ns_), x.tail(nl_));
  }
  MatrixXd constraint_jacobian(const VectorXd& x) const override {
    MatrixXd j(nl_, ns_ + nl_);
    pf_.jacobian(x.head(ns_), x.tail(nl_), j.leftCols(ns_), j.rightCols(nl_));
    return j;
  }
  MatrixXd lagrangian_hessian(const VectorXd&, double sigma, const VectorXd& lambda) const override {
    MatrixXd h = MatrixXd::Zero(ns_ + nl_, ns_ + nl_);
    MatrixXd hrr = MatrixXd::Zero(ns_, ns_), hrv = MatrixXd::Zero(ns_, nl_);
    MatrixXd hvv = MatrixXd::Zero(nl_, nl_), hvr = MatrixXd::Zero(nl_, ns_);
    cost_.hessian(sigma, hrr, hrv);
    pf_.hessian(lambda, hvv, hvr);
    h.topLeftCorner(ns_, ns_) = hrr;
    h.topRightCorner(ns_, nl_) = hrv + hvr.transpose();
    h.bottomLeftCorner(nl_, ns_) = hrv.transpose() + hvr;
    h.bottomRightCorner(nl_, nl_) = hvv;
    return h;
  }
  std::string constraint_name(Index i) const override { return "power_flow[" + load_label(ge_, i) + "]"; }
  std::string variable_name(Index i) const override {
    if (i < ns_) return "vref[" + ge_.source_order[static_cast<std::size_t>(i)] + "]";
    return "v[" + load_label(ge_, i - ns_) + "]";
  }

  const Bases& base() const { return b_; }
  const Cost& cost() const { return cost_; }

 private:
  const NetworkCase& network_;
  const GridEquations& ge_;
  Bases b_;
  PowerFlowRows pf_;
  Cost cost_;
  VectorXd vref_init_;
  Index ns_ = 0, nl_ = 0;
};

// Variables: [x_r (ns), x_v (nl), u, a, b, c, d, r].
// Rows, in order:
//   pf (nl)                 = 0
//   d u - a                 = 0
//   2 r - (u - d) + c       = 0
//   c^2 - (u - d)^2 + 4 b   = 0
//   u - d                   >= eps
//   u w_j - v_j             <= 0          (nl)
//   a - s1_j, a + s1_j      >= 0          (2 nl)
//   b - s2_kj, b + s2_kj    >= 0          (2 nl per worst-case load)
//   v_j - r w_j             >= v_lower_j  (nl)
//   v_j + r w_j             <= v_upper_j  (nl)
class RobustProblem : public NlpProblem {
 public:
  RobustProblem(const NetworkCase& network, const GridEquations& ge, const VectorXd& v_lower,
                const VectorXd& v_upper, const VectorXd& vref_init, const OpfOptions& options)
      : network_(network),
        ge_(ge),
        b_(bases(network, ge)),
        pf_(ge, b_, network.p_nominal()),
        cost_(network, ge, b_),
        s1_(ge, b_, network.p_nominal()),
        v_lower_(v_lower / b_.v),
        v_upper_(v_upper / b_.v),
        vref_init_(vref_init),
        eps_(options.strict_margin) {
    ns_ = network.num_sources();
    nl_ = network.num_loads();
    for (const auto& pm : worst_case_loads(network, options.worst_case))
      s2_.emplace_back(ge, b_, network.p_nominal() - pm);
    iu_ = ns_ + nl_;
    ia_ = iu_ + 1;
    ib_ = iu_ + 2;
    ic_ = iu_ + 3;
    id_ = iu_ + 4;
    ir_ = iu_ + 5;
    n_ = iu_ + 6;
    row_umin_ = nl_ + 4;
    row_s1_ = row_umin_ + nl_;
    row_s2_ = row_s1_ + 2 * nl_;
    row_band_ = row_s2_ + 2 * nl_ * static_cast<Index>(s2_.size());
    m_ = row_band_ + 2 * nl_;
  }

  Index num_variables() const override { return n_; }
  Index num_constraints() const override { return m_; }

  void bounds(VectorXd& xl, VectorXd& xh, VectorXd& gl, VectorXd& gh) const override {
    xl = VectorXd::Constant(n_, 0.0);
    xh = VectorXd::Constant(n_, kInf);
    xl.head(ns_) = network_.vref_min() / b_.v;
    xh.head(ns_) = network_.vref_max() / b_.v;
    xl.segment(ns_, nl_) = v_lower_;
    xh.segment(ns_, nl_) = v_upper_;
    xl(ic_) = std::sqrt(eps_);  // gamma = c^2 >= eps
    gl = VectorXd::Zero(m_);
    gh = VectorXd::Zero(m_);
    gl(nl_ + 3) = eps_;
    gh(nl_ + 3) = kInf;
    gl.segment(row_umin_, nl_).setConstant(-kInf);
    gh.segment(row_s1_, row_band_ - row_s1_).setConstant(kInf);
    gl.segment(row_band_, nl_) = v_lower_.array() + eps_;
    gh.segment(row_band_, nl_).setConstant(kInf);
    gl.segment(row_band_ + nl_, nl_).setConstant(-kInf);
    gh.segment(row_band_ + nl_, nl_) = v_upper_.array() - eps_;
  }

  VectorXd initial_point() const override {
    VectorXd x(n_);
    const VectorXd xr = vref_init_ / b_.v;
    x.head(ns_) = xr;
    VectorXd v;
    try {
      v = solve_pf(ge_, vref_init_, network_.p_nominal()).v_load / b_.v;
    } catch (const Error&) {
      v = open_circuit(ge_, vref_init_) / b_.v;
    }
    x.segment(ns_, nl_) = v;
    const VectorXd w = s1_.m() * xr;
    const double u = v.cwiseQuotient(w).minCoeff();
    const double a = s1_.value(xr).cwiseAbs().maxCoeff();
    double b = 0.0;
    for (const auto& s2 : s2_) b = std::max(b, s2.value(xr).cwiseAbs().maxCoeff());
    const double d = a / u;
    const double c = std::sqrt(std::max((u - d) * (u - d) - 4.0 * b, eps_));
    x(iu_) = u;
    x(ia_) = a;
    x(ib_) = b;
    x(ic_) = c;
    x(id_) = d;
    x(ir_) = std::max(0.0, 0.5 * ((u - d) - c));
    return x;
  }

  double objective(const VectorXd& x) const override {
    return cost_.value(x.head(ns_), x.segment(ns_, nl_));
  }
  VectorXd objective_gradient(const VectorXd& x) const override {
    VectorXd g = VectorXd::Zero(n_);
    cost_.gradient(x.head(ns_), x.segment(ns_, nl_), g.head(ns_), g.segment(ns_, nl_));
    return g;
  }

  VectorXd constraints(const VectorXd& x) const override {
    const VectorXd xr = x.head(ns_), xv = x.segment(ns_, nl_);
    const double u = x(iu_), a = x(ia_), b = x(ib_), c = x(ic_), d = x(id_), r = x(ir_);
    VectorXd g(m_);
    g.head(nl_) = pf_.value(xr, xv);
    g(nl_) = d * u - a;
    g(nl_ + 1) = 2.0 * r - (u - d) + c;
    g(nl_ + 2) = c * c - (u - d) * (u - d) + 4.0 * b;
    g(nl_ + 3) = u - d;
    const VectorXd w = s1_.m() * xr;
    g.segment(row_umin_, nl_) = u * w - xv;
    const VectorXd s1 = s1_.value(xr);
    g.segment(row_s1_, nl_) = a - s1.array();
    g.segment(row_s1_ + nl_, nl_) = a + s1.array();
    for (std::size_t k = 0; k < s2_.size(); ++k) {
      const VectorXd s2 = s2_[k].value(xr);
      const Index row = row_s2_ + 2 * nl_ * static_cast<Index>(k);
      g.segment(row, nl_) = b - s2.array();
      g.segment(row + nl_, nl_) = b + s2.array();
    }
    g.segment(row_band_, nl_) = xv - r * w;
    g.segment(row_band_ + nl_, nl_) = xv + r * w;
    return g;
  }

  MatrixXd constraint_jacobian(const VectorXd& x) const override {
    const VectorXd xr = x.head(ns_), xv = x.segment(ns_, nl_);
    const double u = x(iu_), c = x(ic_), d = x(id_), r = x(ir_);
    MatrixXd j = MatrixXd::Zero(m_, n_);
    pf_.jacobian(xr, xv, j.block(0, 0, nl_, ns_), j.block(0, ns_, nl_, nl_));
    j(nl_, id_) = u;
    j(nl_, iu_) = d;
    j(nl_, ia_) = -1.0;
    j(nl_ + 1, ir_) = 2.0;
    j(nl_ + 1, iu_) = -1.0;
    j(nl_ + 1, id_) = 1.0;
    j(nl_ + 1, ic_) = 1.0;
    j(nl_ + 2, ic_) = 2.0 * c;
    j(nl_ + 2, iu_) = -2.0 * (u - d);
    j(nl_ + 2, id_) = 2.0 * (u - d);
    j(nl_ + 2, ib_) = 4.0;
    j(nl_ + 3, iu_) = 1.0;
    j(nl_ + 3, id_) = -1.0;
    const MatrixXd& m = s1_.m();
    const VectorXd w = m * xr;
    j.block(row_umin_, 0, nl_, ns_) = u * m;
    j.block(row_umin_, iu_, nl_, 1) = w;
    j.block(row_umin_, ns_, nl_, nl_).diagonal().setConstant(-1.0);
    const MatrixXd ds1 = s1_.jacobian(xr);
    j.block(row_s1_, 0, nl_, ns_) = -ds1;
    j.block(row_s1_ + nl_, 0, nl_, ns_) = ds1;
    j.block(row_s1_, ia_, 2 * nl_, 1).setOnes();
    for (std::size_t k = 0; k < s2_.size(); ++k) {
      const MatrixXd ds2 = s2_[k].jacobian(xr);
      const Index row = row_s2_ + 2 * nl_ * static_cast<Index>(k);
      j.block(row, 0, nl_, ns_) = -ds2;
      j.block(row + nl_, 0, nl_, ns_) = ds2;
      j.block(row, ib_, 2 * nl_, 1).setOnes();
    }
    j.block(row_band_, 0, nl_, ns_) = -r * m;
    j.block(row_band_ + nl_, 0, nl_, ns_) = r * m;
    j.block(row_band_, ns_, nl_, nl_).diagonal().setOnes();
    j.block(row_band_ + nl_, ns_, nl_, nl_).diagonal().setOnes();
    j.block(row_band_, ir_, nl_, 1) = -w;
    j.block(row_band_ + nl_, ir_, nl_, 1) = w;
    return j;
  }

  MatrixXd lagrangian_hessian(const VectorXd& x, double sigma, const VectorXd& lambda) const override {
    const VectorXd xr = x.head(ns_);
    MatrixXd h = MatrixXd::Zero(n_, n_);
    {
      MatrixXd hrr = MatrixXd::Zero(ns_, ns_), hrv = MatrixXd::Zero(ns_, nl_);
      MatrixXd hvv = MatrixXd::Zero(nl_, nl_), hvr = MatrixXd::Zero(nl_, ns_);
      cost_.hessian(sigma, hrr, hrv);
      pf_.hessian(lambda.head(nl_), hvv, hvr);
      h.topLeftCorner(ns_, ns_) += hrr;
      h.block(0, ns_, ns_, nl_) += hrv + hvr.transpose();
      h.block(ns_, 0, nl_, ns_) += hrv.transpose() + hvr;
      h.block(ns_, ns_, nl_, nl_) += hvv;
    }
    // d u - a
    h(iu_, id_) += lambda(nl_);
    h(id_, iu_) += lambda(nl_);
    // c^2 - (u - d)^2 + 4 b
    const double l2 = lambda(nl_ + 2);
    h(ic_, ic_) += 2.0 * l2;
    h(iu_, iu_) -= 2.0 * l2;
    h(id_, id_) -= 2.0 * l2;
    h(iu_, id_) += 2.0 * l2;
    h(id_, iu_) += 2.0 * l2;
    const MatrixXd& m = s1_.m();
    // u w - v  and  v -+ r w
    const VectorXd lu = m.transpose() * lambda.segment(row_umin_, nl_);
    const VectorXd lr = m.transpose() * (lambda.segment(row_band_ + nl_, nl_) -
                                         lambda.segment(row_band_, nl_));
    h.block(0, iu_, ns_, 1) += lu;
    h.block(iu_, 0, 1, ns_) += lu.transpose();
    h.block(0, ir_, ns_, 1) += lr;
    h.block(ir_, 0, 1, ns_) += lr.transpose();
    // epigraph rows
    const VectorXd mu1 = lambda.segment(row_s1_ + nl_, nl_) - lambda.segment(row_s1_, nl_);
    h.topLeftCorner(ns_, ns_) += s1_.weighted_hessian(xr, mu1);
    for (std::size_t k = 0; k < s2_.size(); ++k) {
      const Index row = row_s2_ + 2 * nl_ * static_cast<Index>(k);
      const VectorXd mu2 = lambda.segment(row + nl_, nl_) - lambda.segment(row, nl_);
      h.topLeftCorner(ns_, ns_) += s2_[k].weighted_hessian(xr, mu2);
    }
    return h;
  }

  std::string constraint_name(Index i) const override {
    if (i < nl_) return "power_flow[" + load_label(ge_, i) + "]";
    if (i == nl_) return "d*u_min=a";
    if (i == nl_ + 1) return "radius_definition";
    if (i == nl_ + 2) return "gamma_definition";
    if (i == nl_ + 3) return "u_min^2>a";
    if (i < row_s1_) return "u_min*w<=v[" + load_label(ge_, i - row_umin_) + "]";
    if (i < row_s2_) return "a>=|s1|[" + load_label(ge_, (i - row_s1_) % nl_) + "]";
    if (i < row_band_) return "b>=|s2|[" + load_label(ge_, (i - row_s2_) % nl_) + "]";
    if (i < row_band_ + nl_) return "band_lower[" + load_label(ge_, i - row_band_) + "]";
    return "band_upper[" + load_label(ge_, i - row_band_ - nl_) + "]";
  }
  std::string variable_name(Index i) const override {
    if (i < ns_) return "vref[" + ge_.source_order[static_cast<std::size_t>(i)] + "]";
    if (i < iu_) return "v[" + load_label(ge_, i - ns_) + "]";
    static const char* aux[] = {"u_min", "a", "b", "c", "d", "r"};
    return aux[i - iu_];
  }

  const Bases& base() const { return b_; }
  const Cost& cost() const { return cost_; }
  Index aux_offset() const { return iu_; }

 private:
  const NetworkCase& network_;
  const GridEquations& ge_;
  Bases b_;
  PowerFlowRows pf_;
  Cost cost_;
  NormalizedProduct s1_;
  std::vector<NormalizedProduct> s2_;
  VectorXd v_lower_, v_upper_, vref_init_;
  double eps_;
  Index ns_ = 0, nl_ = 0, n_ = 0, m_ = 0;
  Index iu_ = 0, ia_ = 0, ib_ = 0, ic_ = 0, id_ = 0, ir_ = 0;
  Index row_umin_ = 0, row_s1_ = 0, row_s2_ = 0, row_band_ = 0;
};

VectorXd default_vref(const NetworkCase& network) {
  return 0.5 * (network.vref_min() + network.vref_max());
}

// Radius from (u, a, b): the smaller root of r^2 - (u - a/u) r + b = 0.
double radius(double u, double a, double b, double* gamma) {
  const double x = u - a / u;
  const double g = x * x - 4.0 * b;
  if (gamma) *gamma = g;
  if (g < 0.0) return kInf;
  return 0.5 * (x - std::sqrt(g));
}

}  // namespace

std::string to_string(WorstCaseMode mode) {
  return mode == WorstCaseMode::l1_endpoint ? "l1" : "exact";
}

WorstCaseMode parse_worst_case_mode(const std::string& name) {
  if (name == "l1" || name == "paper") return WorstCaseMode::l1_endpoint;
  if (name == "exact") return WorstCaseMode::exact;
  throw Error("unknown worst-case mode '" + name + "' (expected l1 or exact)");
}

VectorXd worst_case_load(const NetworkCase& network) {
  const VectorXd p = network.p_nominal(), lo = network.p_min(), hi = network.p_max();
  VectorXd pm(p.size());
  for (Index j = 0; j < p.size(); ++j) pm(j) = (hi(j) - p(j) >= p(j) - lo(j)) ? hi(j) : lo(j);
  return pm;
}

std::vector<VectorXd> worst_case_loads(const NetworkCase& network, WorstCaseMode mode) {
  if (mode == WorstCaseMode::l1_endpoint) return {worst_case_load(network)};
  return {network.p_max(), network.p_min()};
}

double box_deviation_norm(const MatrixXd& z, const NetworkCase& network) {
  const VectorXd p = network.p_nominal();
  const VectorXd dlo = p - network.p_max();  // <= 0
  const VectorXd dhi = p - network.p_min();  // >= 0
  double worst = 0.0;
  for (Index j = 0; j < z.rows(); ++j) {
    double up = 0.0, down = 0.0;
    for (Index k = 0; k < z.cols(); ++k) {
      const double e1 = z(j, k) * dlo(k), e2 = z(j, k) * dhi(k);
      up += std::max(e1, e2);
      down += std::min(e1, e2);
    }
    worst = std::max({worst, up, -down});
  }
  return worst;
}

SolvabilityCertificate certify_deviation(const GridEquations& ge, const VectorXd& vref,
                                         const VectorXd& p_star, double b) {
  const PfSolution pf = solve_pf(ge, vref, p_star);
  SolvabilityCertificate cert;
  cert.v_star = pf.v_load;
  cert.w = open_circuit(ge, vref);
  const MatrixXd z = normalized_impedance(ge, cert.w);
  cert.u_min = pf.v_load.cwiseQuotient(cert.w).minCoeff();
  cert.a = (z * p_star).lpNorm<Eigen::Infinity>();
  cert.b = b;
  const double u = cert.u_min;
  cert.radius_r = radius(u, cert.a, b, &cert.gamma_s);
  cert.holds = cert.a < u * u && cert.gamma_s > 0.0;
  if (cert.holds) {
    cert.band_lo = cert.v_star - cert.radius_r * cert.w;
    cert.band_hi = cert.v_star + cert.radius_r * cert.w;
  } else {
    cert.radius_r = kInf;
    cert.band_lo = VectorXd::Constant(cert.w.size(), -kInf);
    cert.band_hi = VectorXd::Constant(cert.w.size(), kInf);
  }
  return cert;
}

SolvabilityCertificate certify_solvability(const GridEquations& ge, const VectorXd& vref,
                                           const VectorXd& p_star, const VectorXd& p) {
  const VectorXd w = open_circuit(ge, vref);
  const double b = (normalized_impedance(ge, w) * (p_star - p)).lpNorm<Eigen::Infinity>();
  return certify_deviation(ge, vref, p_star, b);
}

std::unique_ptr<NlpProblem> nominal_opf_problem(const NetworkCase& network, const GridEquations& ge) {
  return std::make_unique<NominalProblem>(network, ge, default_vref(network));
}

std::unique_ptr<NlpProblem> robust_opf_problem(const NetworkCase& network, const GridEquations& ge,
                                               const VectorXd& v_lower, const VectorXd& v_upper,
                                               const VectorXd& vref_init, const OpfOptions& options) {
  return std::make_unique<RobustProblem>(network, ge, v_lower, v_upper, vref_init, options);
}

NominalOpfSolution solve_nominal_opf(const NetworkCase& network, const OpfOptions& options) {
  const GridEquations ge = grid_equations(network);
  const NominalProblem problem(network, ge, default_vref(network));
  const NlpResult r = nlp_solve(problem, options.nlp);
  const Index ns = network.num_sources();
  const double vb = problem.base().v;

  NominalOpfSolution out;
  out.vref = r.x.head(ns) * vb;
  const PfSolution pf =
      solve_pf(ge, out.vref, network.p_nominal(), VectorXd(r.x.tail(network.num_loads()) * vb));
  out.v_star = pf.v_load;
  out.losses = losses(ge, pf, out.vref);
  out.series_losses = series_losses(ge, pf, out.vref);
  out.objective = network.cost.kind == CostKind::nominal_losses ? out.losses
                                                                 : r.objective * problem.cost().unit();
  out.kkt_residual = r.kkt_residual;
  out.iterations = r.iterations;
  return out;
}

RobustOpfSolution solve_robust_opf(const NetworkCase& network, const StabilitySet& stabset,
                                   const OpfOptions& options) {
  const GridEquations ge = grid_equations(network);
  const Index ns = network.num_sources();
  const Index nl = network.num_loads();

  RobustOpfSolution out;
  out.worst_case = options.worst_case;
  out.worst_loads = worst_case_loads(network, options.worst_case);
  out.v_lower = network.v_min();
  if (stabset.v_floor.size() == nl) out.v_lower = out.v_lower.cwiseMax(stabset.v_floor);
  out.v_upper = network.v_max();
  for (Index j = 0; j < nl; ++j)
    if (out.v_lower(j) >= out.v_upper(j))
      throw InfeasibleError("stability floor is above the voltage limit",
                            "band_lower[" + ge.load_order[static_cast<std::size_t>(j)] + "]");

  // Start from the nominal optimum pushed up, since the floors raise voltages.
  VectorXd vref0;
  try {
    vref0 = solve_nominal_opf(network, options).vref;
  } catch (const Error&) {
    vref0 = default_vref(network);
  }
  vref0 = (options.init_inflation * vref0).cwiseMin(network.vref_max()).cwiseMax(network.vref_min());

  const RobustProblem problem(network, ge, out.v_lower, out.v_upper, vref0, options);
  const NlpResult r = nlp_solve(problem, options.nlp);
  const double vb = problem.base().v;

  out.vref = r.x.head(ns) * vb;
  out.kkt_residual = r.kkt_residual;
  out.iterations = r.iterations;

  // Polish v* and tighten the auxiliaries to their defining values.
  const VectorXd p_star = network.p_nominal();
  const PfSolution pf = solve_pf(ge, out.vref, p_star, VectorXd(r.x.segment(ns, nl) * vb));
  out.v_star = pf.v_load;
  const VectorXd w = open_circuit(ge, out.vref);
  const MatrixXd z = normalized_impedance(ge, w);
  double b = 0.0;
  for (const auto& pm : out.worst_loads) b = std::max(b, (z * (p_star - pm)).lpNorm<Eigen::Infinity>());
  out.certificate = certify_deviation(ge, out.vref, p_star, b);
  const auto& cert = out.certificate;
  out.u_min = cert.u_min;
  out.aux.a = cert.a;
  out.aux.b = cert.b;
  out.aux.d = cert.a / cert.u_min;
  out.gamma_bar = cert.gamma_s;
  out.aux.c = std::sqrt(std::max(0.0, cert.gamma_s));
  out.r_bar = 0.5 * ((out.u_min - out.aux.d) - out.aux.c);
  out.band_lo = cert.band_lo;
  out.band_hi = cert.band_hi;

  out.losses = losses(ge, pf, out.vref);
  out.series_losses = series_losses(ge, pf, out.vref);
  out.objective = network.cost.kind == CostKind::nominal_losses ? out.losses
                                                                 : r.objective * problem.cost().unit();

  if (!cert.holds) throw Error("robust OPF: solvability certificate fails at the returned point");
  const double tol = 1e-9 * vb;
  for (Index j = 0; j < nl; ++j)
    if (out.band_lo(j) < out.v_lower(j) - tol || out.band_hi(j) > out.v_upper(j) + tol)
      throw Error("robust OPF: certified band leaves the voltage limits at load " +
                  ge.load_order[static_cast<std::size_t>(j)]);
  return out;
}

}  // namespace dcopf
