#pragma once

#include <Eigen/Cholesky>
#include <limits>
#include <vector>

#include "mpcgrad/types.hpp"

namespace mpcgrad {

enum class QpStatus { Optimal, MaxIter, NumericalFailure };

struct QpResult {
    Vec x;
    Vec lambda;  // one multiplier per row of C, nonnegative at Optimal
    QpStatus status = QpStatus::MaxIter;
    int iterations = 0;
    std::vector<int> working_set;  // active rows at exit, usable as a warm start
};

/// Primal active-set method for
///     min 1/2 x'Gx + g'x   s.t.   C x <= b
/// with G positive definite and x0 feasible. Equality-constrained subproblems
/// are solved through the Schur complement on a cached Cholesky factor of G;
/// the Schur factor is updated only when the working set changes. Working-set
/// rows need not pass exactly through x0, so an inherited working set is a
/// valid warm start. Ties are broken deterministically: the blocking
/// constraint with the largest directional growth rate is added, the most
/// negative multiplier is dropped. Multipliers on a working set do not depend
/// on the position within its plane, so the dual check after an unblocked
/// full step reuses the current ones.
inline QpResult solve_qp(const Mat& G, const Vec& g, const Mat& C, const Vec& b, const Vec& x0,
                         int max_iter = 0, const std::vector<int>* warm_working_set = nullptr) {
    const int n = static_cast<int>(g.size());
    const int mc = static_cast<int>(b.size());
    if (max_iter <= 0) max_iter = 30 * (mc + n) + 60;

    QpResult out;
    out.x = x0;
    out.lambda = Vec::Zero(mc);

    Eigen::LLT<Mat> llt(G);
    if (llt.info() != Eigen::Success) {
        out.status = QpStatus::NumericalFailure;
        return out;
    }

    std::vector<int> work;
    std::vector<char> in_work(static_cast<std::size_t>(mc), 0);
    Mat cw(0, n);       // working rows of C
    Mat ginv_cw(n, 0);  // G^{-1} cw'
    Mat schur(0, 0);    // cw G^{-1} cw'
    Eigen::LDLT<Mat> schur_ldlt;

    auto add_row = [&](int row) {
        const int nw = static_cast<int>(work.size());
        work.push_back(row);
        in_work[static_cast<std::size_t>(row)] = 1;
        cw.conservativeResize(nw + 1, Eigen::NoChange);
        cw.row(nw) = C.row(row);
        ginv_cw.conservativeResize(Eigen::NoChange, nw + 1);
        ginv_cw.col(nw) = llt.solve(C.row(row).transpose());
        schur.conservativeResize(nw + 1, nw + 1);
        if (nw) {
            const Vec col = cw.topRows(nw) * ginv_cw.col(nw);
            schur.block(0, nw, nw, 1) = col;
            schur.block(nw, 0, 1, nw) = col.transpose();
        }
        schur(nw, nw) = cw.row(nw).dot(ginv_cw.col(nw));
        schur_ldlt.compute(schur);
    };
    auto remove_row = [&](int pos) {
        in_work[static_cast<std::size_t>(work[static_cast<std::size_t>(pos)])] = 0;
        work.erase(work.begin() + pos);
        const int nw = static_cast<int>(work.size());
        Mat cw_new(nw, n), ginv_new(n, nw), schur_new(nw, nw);
        for (int j = 0, src = 0; j < nw; ++j, ++src) {
            if (src == pos) ++src;
            cw_new.row(j) = cw.row(src);
            ginv_new.col(j) = ginv_cw.col(src);
        }
        for (int r = 0, rs = 0; r < nw; ++r, ++rs) {
            if (rs == pos) ++rs;
            for (int c = 0, cs = 0; c < nw; ++c, ++cs) {
                if (cs == pos) ++cs;
                schur_new(r, c) = schur(rs, cs);
            }
        }
        cw = std::move(cw_new);
        ginv_cw = std::move(ginv_new);
        schur = std::move(schur_new);
        if (nw) schur_ldlt.compute(schur);
    };

    if (warm_working_set) {
        for (int row : *warm_working_set) {
            if (row < 0 || row >= mc || in_work[static_cast<std::size_t>(row)]) continue;
            if (static_cast<int>(work.size()) >= n) break;
            work.push_back(row);
            in_work[static_cast<std::size_t>(row)] = 1;
        }
        const int nw = static_cast<int>(work.size());
        if (nw) {
            cw.resize(nw, n);
            for (int j = 0; j < nw; ++j) cw.row(j) = C.row(work[static_cast<std::size_t>(j)]);
            ginv_cw = llt.solve(cw.transpose());
            schur = cw * ginv_cw;
            schur_ldlt.compute(schur);
        }
    }

    Vec lam_w;
    for (int it = 1; it <= max_iter; ++it) {
        out.iterations = it;
        const Vec v = llt.solve(G * out.x + g);
        const int nw = static_cast<int>(work.size());

        Vec dx;
        if (nw == 0) {
            dx = -v;
            lam_w.resize(0);
        } else {
            Vec rhs = -(cw * v);
            for (int j = 0; j < nw; ++j)
                rhs(j) -= b(work[static_cast<std::size_t>(j)]) - cw.row(j).dot(out.x);
            lam_w = schur_ldlt.solve(rhs);
            if (!lam_w.allFinite()) {
                out.status = QpStatus::NumericalFailure;
                out.working_set = work;
                return out;
            }
            dx = -v - ginv_cw * lam_w;
        }

        bool at_minimizer =
            dx.lpNorm<Eigen::Infinity>() <= 1e-11 * (1.0 + out.x.lpNorm<Eigen::Infinity>());
        if (!at_minimizer) {
            double alpha = 1.0;
            int blocker = -1;
            double blocker_rate = 0.0;
            const double dir_tol = 1e-13 * (1.0 + dx.lpNorm<Eigen::Infinity>());
            for (int i = 0; i < mc; ++i) {
                if (in_work[static_cast<std::size_t>(i)]) continue;
                const double rate = C.row(i).dot(dx);
                if (rate <= dir_tol) continue;
                const double slack = std::max(0.0, b(i) - C.row(i).dot(out.x));
                const double ratio = slack / rate;
                if (ratio < alpha - 1e-14) {
                    alpha = ratio;
                    blocker = i;
                    blocker_rate = rate;
                } else if (blocker >= 0 && ratio <= alpha + 1e-14 && rate > blocker_rate) {
                    blocker = i;
                    blocker_rate = rate;
                }
            }
            out.x += alpha * dx;
            if (blocker >= 0) {
                if (static_cast<int>(work.size()) >= n) {
                    // Degenerate vertex: cannot expand the working set further.
                    out.status = QpStatus::MaxIter;
                    out.working_set = work;
                    return out;
                }
                add_row(blocker);
                continue;
            }
            // Unblocked full step lands on the working-set minimizer; the
            // multipliers in hand already certify it.
            at_minimizer = true;
        }

        if (at_minimizer) {
            int drop = -1;
            double most_negative = -1e-11;
            for (int j = 0; j < nw; ++j) {
                if (lam_w(j) < most_negative) {
                    most_negative = lam_w(j);
                    drop = j;
                }
            }
            if (drop < 0) {
                for (int j = 0; j < nw; ++j)
                    out.lambda(work[static_cast<std::size_t>(j)]) = std::max(0.0, lam_w(j));
                out.status = QpStatus::Optimal;
                out.working_set = work;
                return out;
            }
            remove_row(drop);
        }
    }
    out.status = QpStatus::MaxIter;
    out.working_set = work;
    return out;
}

}  // namespace mpcgrad
