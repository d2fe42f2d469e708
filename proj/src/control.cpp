#include "upoc/control.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <fstream>
#include <limits>
#include <utility>
#include <vector>

#include "json.hpp"

namespace upoc {

namespace {

using Eigen::MatrixXd;
using Eigen::VectorXd;

constexpr double kInf = std::numeric_limits<double>::infinity();

// Stack the distinct entries of (Q, Y) into one decision vector. Off-diagonal
// Q entries carry weight sqrt(2) inside the ball block so that the ball bound
// is exactly ||Q||_F^2 + ||Y||_F^2 < radius^2.
int ball_dimension(int n, int k) { return n * (n + 1) / 2 + k * n; }

VectorXd ball_vector(const MatrixXd& Q, const MatrixXd& Y) {
    const int n = Q.rows(), k = Y.rows();
    VectorXd d(ball_dimension(n, k));
    int i = 0;
    for (int p = 0; p < n; ++p)
        for (int q = p; q < n; ++q) d(i++) = (p == q ? 1.0 : std::sqrt(2.0)) * Q(p, q);
    for (int a = 0; a < k; ++a)
        for (int b = 0; b < n; ++b) d(i++) = Y(a, b);
    return d;
}

MatrixXd ball_block(const VectorXd& d, double radius) {
    const int m = d.size();
    MatrixXd F = MatrixXd::Zero(m + 1, m + 1);
    F.diagonal().setConstant(radius);
    F.col(m).head(m) = d;
    F.row(m).head(m) = d.transpose();
    return F;
}

double min_eig(const MatrixXd& F) {
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(F, Eigen::EigenvaluesOnly);
    return es.eigenvalues().minCoeff();
}

// Barrier-Newton machinery for the three affine LMI blocks. Feasibility is
// established by path-following on the uniform shift s: the blocks F(x) + s*I
// are kept strictly definite while s is driven down; x is feasible once the
// unshifted minimum eigenvalue turns positive. Fully deterministic.
class BarrierSolver {
  public:
    BarrierSolver(const MatrixXd& A, const MatrixXd& B, const LmiOptions& opts)
        : A_(A), B_(B), opts_(opts), n_(static_cast<int>(A.rows())),
          k_(static_cast<int>(B.cols())), nv_(ball_dimension(n_, k_)) {
        weights_ = VectorXd::Ones(nv_);
        int i = 0;
        for (int p = 0; p < n_; ++p)
            for (int q = p; q < n_; ++q) weights_(i++) = p == q ? 1.0 : std::sqrt(2.0);
        dQ_.reserve(nv_);
        dM_.reserve(nv_);
        for (int v = 0; v < nv_; ++v) {
            VectorXd e = VectorXd::Zero(nv_);
            e(v) = 1.0;
            MatrixXd Qd, Yd;
            unpack(e, Qd, Yd);
            dQ_.push_back(Qd);
            dM_.push_back(A_ * Qd + B_ * Yd);
        }
    }

    void unpack(const VectorXd& x, MatrixXd& Q, MatrixXd& Y) const {
        Q.resize(n_, n_);
        Y.resize(k_, n_);
        int i = 0;
        for (int p = 0; p < n_; ++p)
            for (int q = p; q < n_; ++q) {
                Q(p, q) = Q(q, p) = x(i++);
            }
        for (int a = 0; a < k_; ++a)
            for (int b = 0; b < n_; ++b) Y(a, b) = x(i++);
    }

    VectorXd initial_point() const {
        VectorXd x = VectorXd::Zero(nv_);
        const double q0 = std::min(1.0, opts_.radius / (4.0 * std::sqrt(double(nv_))));
        int i = 0;
        for (int p = 0; p < n_; ++p)
            for (int q = p; q < n_; ++q) x(i++) = p == q ? q0 : 0.0;
        return x;
    }

    double lambda_min(const VectorXd& x, double rho) const {
        MatrixXd F1, F2, F3;
        blocks(x, 0.0, rho, F1, F2, F3);
        return std::min({min_eig(F1), min_eig(F2), min_eig(F3)});
    }

    // Path-following feasibility; x is updated in place and best tracks the
    // largest unshifted margin seen. In margin-max mode (stop_at_feasible
    // false) the shift keeps decreasing past zero until progress stalls.
    bool feasibility(VectorXd& x, double rho, bool stop_at_feasible, double& best) const {
        double lam = lambda_min(x, rho);
        best = std::max(best, lam);
        if (lam > 0.0 && stop_at_feasible) return true;
        double s = lam <= 0.0 ? -lam + 0.1 * std::max(1.0, std::abs(lam)) : 0.0;
        int stall = 0;
        for (int outer = 0; outer < opts_.max_outer; ++outer) {
            center(x, s, rho);
            lam = lambda_min(x, rho);
            best = std::max(best, lam);
            if (lam > 0.0 && stop_at_feasible) return true;
            const double slack = s + lam;  // interior margin of the shifted blocks
            if (slack <= 0.0) {
                s = -lam * (1.0 + 1e-9) + 1e-300;
                ++stall;
            } else {
                // stall when progress is negligible at the problem's own scale
                // (these problems legitimately live at norms near the margin)
                stall = slack < 1e-9 * (std::abs(s) + std::abs(lam) + opts_.margin) ? stall + 1 : 0;
                s -= 0.75 * slack;
            }
            if (stall >= 3) break;
        }
        return lam > 0.0;
    }

  private:
    void blocks(const VectorXd& x, double s, double rho, MatrixXd& F1, MatrixXd& F2,
                MatrixXd& F3) const {
        MatrixXd Q, Y;
        unpack(x, Q, Y);
        const double shift = s - opts_.margin;
        F1 = Q;
        F1.diagonal().array() += shift;
        const MatrixXd M = A_ * Q + B_ * Y;
        F2.resize(2 * n_, 2 * n_);
        F2.topLeftCorner(n_, n_) = rho * Q;
        F2.topRightCorner(n_, n_) = M.transpose();
        F2.bottomLeftCorner(n_, n_) = M;
        F2.bottomRightCorner(n_, n_) = rho * Q;
        F2.diagonal().array() += shift;
        F3 = ball_block(weights_.cwiseProduct(x), opts_.radius);
        F3.diagonal().array() += shift;
    }

    double phi(const VectorXd& x, double s, double rho) const {
        MatrixXd F1, F2, F3;
        blocks(x, s, rho, F1, F2, F3);
        double total = 0.0;
        for (const MatrixXd* F : {&F1, &F2, &F3}) {
            Eigen::SelfAdjointEigenSolver<MatrixXd> es(*F, Eigen::EigenvaluesOnly);
            if (es.eigenvalues().minCoeff() <= 0.0) return kInf;
            total -= es.eigenvalues().array().log().sum();
        }
        return total;
    }

    void center(VectorXd& x, double s, double rho) const {
        std::vector<MatrixXd> W1(nv_), W2(nv_);
        MatrixXd dF2i(2 * n_, 2 * n_);
        for (int it = 0; it < opts_.max_newton; ++it) {
            MatrixXd F1, F2, F3;
            blocks(x, s, rho, F1, F2, F3);
            if (std::min({min_eig(F1), min_eig(F2), min_eig(F3)}) <= 0.0) return;
            const MatrixXd S1 = F1.inverse();
            const MatrixXd S2 = F2.inverse();
            const MatrixXd S3 = F3.inverse();
            VectorXd g(nv_);
            for (int i = 0; i < nv_; ++i) {
                W1[i] = S1 * dQ_[i];
                dF2i.topLeftCorner(n_, n_) = rho * dQ_[i];
                dF2i.topRightCorner(n_, n_) = dM_[i].transpose();
                dF2i.bottomLeftCorner(n_, n_) = dM_[i];
                dF2i.bottomRightCorner(n_, n_) = rho * dQ_[i];
                W2[i] = S2 * dF2i;
                g(i) = -W1[i].trace() - W2[i].trace() - 2.0 * weights_(i) * S3(i, nv_);
            }
            MatrixXd H(nv_, nv_);
            for (int i = 0; i < nv_; ++i)
                for (int j = i; j < nv_; ++j) {
                    double h = (W1[i].array() * W1[j].transpose().array()).sum() +
                               (W2[i].array() * W2[j].transpose().array()).sum();
                    h += 2.0 * weights_(i) * weights_(j) *
                         (S3(i, j) * S3(nv_, nv_) + S3(i, nv_) * S3(j, nv_));
                    H(i, j) = H(j, i) = h;
                }
            H.diagonal().array() += 1e-13 * H.trace() / nv_;
            const VectorXd step = H.ldlt().solve(-g);
            const double decrement = -g.dot(step);
            if (!(decrement > 1e-10)) return;
            const double f0 = phi(x, s, rho);
            double t = 1.0;
            while (t > 1e-14 && phi(x + t * step, s, rho) > f0 - 0.25 * t * decrement) t *= 0.5;
            if (t <= 1e-14) return;
            x += t * step;
        }
    }

    MatrixXd A_, B_;
    LmiOptions opts_;
    int n_, k_, nv_;
    VectorXd weights_;
    std::vector<MatrixXd> dQ_, dM_;
};

void check_system(const ReducedSystem& sys) {
    const auto n = sys.A.rows();
    if (n == 0 || sys.A.cols() != n) throw ControlError("lmi: active block must be square and non-empty");
    if (sys.B.rows() != n || sys.B.cols() == 0)
        throw ControlError("lmi: actuation block dimensions inconsistent with A");
}

}  // namespace

Eigen::Matrix<double, 6, 3> actuation_matrix() {
    Eigen::Matrix<double, 6, 3> R = Eigen::Matrix<double, 6, 3>::Zero();
    R(3, 0) = 1.0;
    R(4, 1) = 1.0;
    R(5, 2) = 1.0;
    return R;
}

Controllability controllability(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B) {
    const int n = static_cast<int>(A.rows());
    const int k = static_cast<int>(B.cols());
    if (n == 0 || A.cols() != n || B.rows() != n || k == 0)
        throw ControlError("controllability: inconsistent dimensions");
    Controllability out;
    out.C.resize(n, n * k);
    MatrixXd P = B;
    for (int i = 0; i < n; ++i) {
        out.C.middleCols(i * k, k) = P;
        P = A * P;
    }
    Eigen::JacobiSVD<MatrixXd> svd(out.C);
    const VectorXd& s = svd.singularValues();
    const double tol = n * std::numeric_limits<double>::epsilon() * s(0);
    out.rank = static_cast<int>((s.array() > tol).count());
    out.full_rank = out.rank == n;
    return out;
}

Eigen::Matrix<double, 3, 6> ReducedSystem::embed(const Eigen::MatrixXd& K_active) const {
    if (K_active.rows() != static_cast<Eigen::Index>(channels.size()) ||
        K_active.cols() != static_cast<Eigen::Index>(active.size()))
        throw ControlError("embed: gain shape does not match the reduction");
    Eigen::Matrix<double, 3, 6> K = Eigen::Matrix<double, 3, 6>::Zero();
    for (std::size_t c = 0; c < channels.size(); ++c)
        for (std::size_t j = 0; j < active.size(); ++j) K(channels[c], active[j]) = K_active(c, j);
    return K;
}

Eigen::MatrixXd ReducedSystem::extract(const Eigen::Matrix<double, 3, 6>& K_full) const {
    MatrixXd K(channels.size(), active.size());
    for (std::size_t c = 0; c < channels.size(); ++c)
        for (std::size_t j = 0; j < active.size(); ++j) K(c, j) = K_full(channels[c], active[j]);
    return K;
}

ReducedSystem reduce_for_control(const LinearizedMap& lin) {
    if (lin.active.empty()) throw ControlError("reduce_for_control: active block empty");
    ReducedSystem sys;
    sys.active = lin.active;
    for (int c = 0; c < 3; ++c)
        if (std::find(lin.active.begin(), lin.active.end(), 3 + c) != lin.active.end())
            sys.channels.push_back(c);
    if (sys.channels.empty())
        throw ControlError("reduce_for_control: no actuation channel acts on the active block");
    const int n = static_cast<int>(lin.active.size());
    const int k = static_cast<int>(sys.channels.size());
    sys.A.resize(n, n);
    sys.B.resize(n, k);
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) sys.A(i, j) = lin.A(lin.active[i], lin.active[j]);
        for (int c = 0; c < k; ++c) sys.B(i, c) = lin.A(lin.active[i], 3 + sys.channels[c]);
    }
    return sys;
}

LmiCertificate verify_certificate(const ReducedSystem& sys, const Eigen::MatrixXd& Q,
                                  const Eigen::MatrixXd& Y, const LmiOptions& opts) {
    check_system(sys);
    const int n = static_cast<int>(sys.A.rows());
    LmiCertificate cert;
    cert.q_min_eig = min_eig(Q);
    const MatrixXd M = sys.A * Q + sys.B * Y;
    MatrixXd F2(2 * n, 2 * n);
    F2.topLeftCorner(n, n) = Q;
    F2.topRightCorner(n, n) = M.transpose();
    F2.bottomLeftCorner(n, n) = M;
    F2.bottomRightCorner(n, n) = Q;
    cert.lmi_min_eig = min_eig(F2);
    cert.ball_min_eig = min_eig(ball_block(ball_vector(Q, Y), opts.radius));
    cert.feasible = cert.q_min_eig >= opts.margin && cert.lmi_min_eig >= opts.margin &&
                    cert.ball_min_eig > 0.0;
    return cert;
}

LmiSolution solve_lmi(const ReducedSystem& sys, const LmiOptions& opts) {
    check_system(sys);
    if (!(opts.radius > 0.0) || !(opts.margin > 0.0))
        throw ControlError("lmi: radius and margin must be positive");
    BarrierSolver solver(sys.A, sys.B, opts);
    LmiSolution sol;
    VectorXd x = solver.initial_point();
    double best = -kInf;
    if (!solver.feasibility(x, 1.0, true, best)) {
        sol.feasible = false;
        sol.rho = 1.0;
        sol.best_min_eig = best;
        return sol;
    }
    // Bisect the contraction rate of the Stein block downward: the smaller the
    // certified rate, the closer the closed-loop spectrum sits to zero. Any
    // rho < 1 solution also satisfies the rho = 1 block since Q is PSD.
    double rho_hi = 1.0, rho_lo = 0.0;
    VectorXd x_hi = x;
    for (double rho = 0.1; rho >= opts.rho_floor * (1.0 - 1e-12); rho *= 0.1) {
        VectorXd trial = x_hi;
        double b = -kInf;
        if (!solver.feasibility(trial, rho, true, b)) {
            rho_lo = rho;
            break;
        }
        rho_hi = rho;
        x_hi = trial;
    }
    if (rho_lo > 0.0) {
        for (int i = 0; i < 8 && rho_hi / rho_lo > 1.2; ++i) {
            const double mid = std::sqrt(rho_lo * rho_hi);
            VectorXd trial = x_hi;
            double b = -kInf;
            if (solver.feasibility(trial, mid, true, b)) {
                rho_hi = mid;
                x_hi = trial;
            } else {
                rho_lo = mid;
            }
        }
    }
    {
        // Final polish: maximize the margin at the settled rate so the
        // certificate sits comfortably inside all three blocks.
        VectorXd polished = x_hi;
        double b = -kInf;
        if (solver.feasibility(polished, rho_hi, false, b)) x_hi = polished;
    }
    MatrixXd Q, Y;
    solver.unpack(x_hi, Q, Y);
    sol.feasible = true;
    sol.rho = rho_hi;
    sol.Q = Q;
    sol.Y = Y;
    Eigen::LLT<MatrixXd> llt(Q);
    if (llt.info() != Eigen::Success) throw ControlError("lmi: recovered Q is not positive definite");
    sol.K_active = llt.solve(Y.transpose()).transpose();
    sol.K_full = sys.embed(sol.K_active);
    sol.certificate = verify_certificate(sys, Q, Y, opts);
    sol.best_min_eig = std::min(
        {sol.certificate.q_min_eig, sol.certificate.lmi_min_eig, sol.certificate.ball_min_eig});
    return sol;
}

ClosedLoop closed_loop_matrix(const Matrix6d& A, const Eigen::Matrix<double, 6, 3>& R,
                              const Eigen::Matrix<double, 3, 6>& K_full) {
    ClosedLoop cl;
    cl.M = A + A * R * K_full;
    Eigen::EigenSolver<Matrix6d> es(cl.M);
    cl.eigenvalues = es.eigenvalues();
    return cl;
}

double spectral_radius(const Eigen::MatrixXd& M) {
    if (M.rows() == 0) return 0.0;
    Eigen::EigenSolver<MatrixXd> es(M, false);
    return es.eigenvalues().cwiseAbs().maxCoeff();
}

MinRadiusResult find_min_radius(const ReducedSystem& sys, const LmiOptions& base, double lo,
                                double hi, double rel_tol) {
    if (!(lo > 0.0) || !(hi > lo)) throw ControlError("find_min_radius: need 0 < lo < hi");
    LmiOptions opts = base;
    opts.radius = hi;
    LmiSolution at_hi = solve_lmi(sys, opts);
    if (!at_hi.feasible) throw ControlError("find_min_radius: infeasible at the upper radius");
    opts.radius = lo;
    LmiSolution at_lo = solve_lmi(sys, opts);
    if (at_lo.feasible) return MinRadiusResult{lo, 0.0, std::move(at_lo)};
    MinRadiusResult out;
    double rhi = hi, rlo = lo;
    LmiSolution sol = std::move(at_hi);
    while (rhi / rlo > 1.0 + rel_tol) {
        const double mid = std::sqrt(rhi * rlo);
        opts.radius = mid;
        LmiSolution trial = solve_lmi(sys, opts);
        if (trial.feasible) {
            rhi = mid;
            sol = std::move(trial);
        } else {
            rlo = mid;
        }
    }
    out.radius = rhi;
    out.infeasible_below = rlo;
    out.solution = std::move(sol);
    return out;
}

namespace {

using nlohmann::ordered_json;

}  // namespace

void save_gain_json(const GainRecord& gain, const std::string& path) {
    ordered_json j;
    j["radius"] = gain.radius;
    j["margin"] = gain.margin;
    j["rho"] = gain.rho;
    j["active"] = gain.active;
    j["channels"] = gain.channels;
    ordered_json rows = ordered_json::array();
    for (int r = 0; r < 3; ++r) {
        ordered_json row = ordered_json::array();
        for (int c = 0; c < 6; ++c) row.push_back(gain.K_full(r, c));
        rows.push_back(row);
    }
    j["k_full"] = rows;
    ordered_json spec = ordered_json::array();
    for (const auto& z : gain.closed_loop_spectrum) spec.push_back({{"re", z.real()}, {"im", z.imag()}});
    j["closed_loop_spectrum"] = spec;
    j["certificate"] = {{"q_min_eig", gain.certificate.q_min_eig},
                        {"lmi_min_eig", gain.certificate.lmi_min_eig},
                        {"ball_min_eig", gain.certificate.ball_min_eig},
                        {"feasible", gain.certificate.feasible}};
    std::ofstream out(path);
    if (!out) throw ControlError("cannot write gain file: " + path);
    out << j.dump(2) << "\n";
}

GainRecord load_gain_json(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ControlError("cannot open gain file: " + path);
    ordered_json j;
    try {
        in >> j;
        GainRecord g;
        g.radius = j.at("radius").get<double>();
        g.margin = j.at("margin").get<double>();
        g.rho = j.at("rho").get<double>();
        g.active = j.at("active").get<std::vector<int>>();
        g.channels = j.at("channels").get<std::vector<int>>();
        const auto& rows = j.at("k_full");
        if (rows.size() != 3) throw ControlError("gain file: k_full must have 3 rows");
        for (int r = 0; r < 3; ++r) {
            if (rows[r].size() != 6) throw ControlError("gain file: k_full rows must have 6 entries");
            for (int c = 0; c < 6; ++c) g.K_full(r, c) = rows[r][c].get<double>();
        }
        for (const auto& z : j.at("closed_loop_spectrum"))
            g.closed_loop_spectrum.emplace_back(z.at("re").get<double>(), z.at("im").get<double>());
        const auto& cert = j.at("certificate");
        g.certificate.q_min_eig = cert.at("q_min_eig").get<double>();
        g.certificate.lmi_min_eig = cert.at("lmi_min_eig").get<double>();
        g.certificate.ball_min_eig = cert.at("ball_min_eig").get<double>();
        g.certificate.feasible = cert.at("feasible").get<bool>();
        return g;
    } catch (const ordered_json::exception& e) {
        throw ControlError("gain file " + path + ": " + e.what());
    }
}

}  // namespace upoc
