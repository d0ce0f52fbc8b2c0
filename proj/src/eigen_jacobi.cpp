#include "demand/errors.hpp"
#include "demand/regularity.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>

namespace demand {

Eigen::VectorXd jacobi_eigenvalues(const Eigen::MatrixXd &s, int max_sweeps) {
    const auto n = s.rows();
    if (s.cols() != n) throw DemandError(ErrorCode::DimensionMismatch, "eigenvalues need a square matrix");
    if (!s.allFinite()) throw DemandError(ErrorCode::NonFiniteEntry, "matrix has non-finite entries");
    Eigen::MatrixXd a = s.selfadjointView<Eigen::Lower>();

    for (int sweep = 0; sweep < max_sweeps; ++sweep) {
        double off = 0.0;
        for (Eigen::Index q = 1; q < n; ++q)
            for (Eigen::Index p = 0; p < q; ++p) off += a(p, q) * a(p, q);
        if (off == 0.0) break;
        for (Eigen::Index p = 0; p < n - 1; ++p) {
            for (Eigen::Index q = p + 1; q < n; ++q) {
                const double apq = a(p, q);
                if (apq == 0.0) continue;
                // Skip rotations that cannot change either diagonal entry.
                const double g = 100.0 * std::abs(apq);
                if (sweep > 3 && std::abs(a(p, p)) + g == std::abs(a(p, p)) &&
                    std::abs(a(q, q)) + g == std::abs(a(q, q))) {
                    a(p, q) = a(q, p) = 0.0;
                    continue;
                }
                const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
                const double t = (theta >= 0.0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double sn = t * c;
                const double tau = sn / (1.0 + c);
                a(p, p) -= t * apq;
                a(q, q) += t * apq;
                a(p, q) = a(q, p) = 0.0;
                for (Eigen::Index r = 0; r < n; ++r) {
                    if (r == p || r == q) continue;
                    const double arp = a(r, p);
                    const double arq = a(r, q);
                    a(r, p) = a(p, r) = arp - sn * (arq + tau * arp);
                    a(r, q) = a(q, r) = arq + sn * (arp - tau * arq);
                }
            }
        }
    }
    Eigen::VectorXd ev = a.diagonal();
    std::sort(ev.data(), ev.data() + ev.size(), std::greater<>());
    return ev;
}

EigenTestResult eigen_test(const Eigen::MatrixXd &m, double tolerance) {
    if (m.rows() != m.cols()) throw DemandError(ErrorCode::DimensionMismatch, "eigen test needs a square matrix");
    if (!m.allFinite()) throw DemandError(ErrorCode::NonFiniteEntry, "matrix has non-finite entries");
    const Eigen::MatrixXd sym = 0.5 * (m + m.transpose());
    EigenTestResult r;
    r.eigenvalues = jacobi_eigenvalues(sym);
    r.tolerance = tolerance;
    // An exact null eigenvalue (homogeneity makes every curvature matrix
    // singular) comes out as +-1e-17 or so; its sign is noise, not evidence.
    r.roundoff = 4.0 * static_cast<double>(sym.rows()) * std::numeric_limits<double>::epsilon() * sym.norm();
    r.satisfied = r.eigenvalues.size() == 0 || r.eigenvalues(0) <= tolerance + r.roundoff;
    return r;
}

} // namespace demand
