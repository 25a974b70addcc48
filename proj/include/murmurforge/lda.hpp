#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <map>
#include <span>
#include <stdexcept>
#include <vector>

#include <json.hpp>

#include "murmurforge/linalg.hpp"

namespace murmurforge {

/// Multiclass linear discriminant model. Axes are the top generalized
/// eigenvectors of the (ridged) within/between scatter pencil, obtained by
/// Cholesky whitening followed by a symmetric eigensolve, and come out
/// S_W-orthonormal.
struct LdaModel {
    std::vector<int> classes;                // sorted labels
    DenseMatrix class_means;                 // C x dim
    std::vector<double> global_mean;         // dim
    std::vector<double> priors;              // C, empirical frequencies
    DenseMatrix axes;                        // n_axes x dim (rows), n_axes <= C-1
    std::vector<double> axis_eigenvalues;    // descending
    DenseMatrix whitener;                    // chol factor of (S_W + ridge I)
    double ridge = 0.0;
    // shared-covariance scoring cache: score(v, c) = <v, score_w[c]> + score_b[c]
    DenseMatrix score_w;                     // C x dim
    std::vector<double> score_b;             // C

    std::size_t dim() const { return global_mean.size(); }
    std::size_t n_classes() const { return classes.size(); }
};

/// Classification rule: Gaussian shared-covariance scores (the default),
/// or nearest class centroid in discriminant-axis space for comparison.
enum class LdaRule { SharedCovariance, NearestCentroid };

inline LdaModel fit_lda(const DenseMatrix& X, const std::vector<int>& y) {
    const std::size_t n = X.rows(), m = X.cols();
    if (y.size() != n) throw std::invalid_argument("fit_lda: label count mismatch");

    std::map<int, std::vector<std::size_t>> groups;
    for (std::size_t i = 0; i < n; ++i) groups[y[i]].push_back(i);
    if (groups.size() < 2) throw std::invalid_argument("fit_lda: need at least 2 classes");
    for (const auto& [label, rows] : groups)
        if (rows.size() < 2)
            throw std::invalid_argument("fit_lda: class " + std::to_string(label) +
                                        " has fewer than 2 samples");

    LdaModel model;
    const std::size_t C = groups.size();
    model.class_means = DenseMatrix(C, m);
    model.global_mean.assign(m, 0.0);
    model.priors.resize(C);

    std::size_t c = 0;
    for (const auto& [label, rows] : groups) {
        model.classes.push_back(label);
        model.priors[c] = static_cast<double>(rows.size()) / static_cast<double>(n);
        for (std::size_t i : rows) {
            auto r = X.row(i);
            for (std::size_t j = 0; j < m; ++j) model.class_means(c, j) += r[j];
        }
        for (std::size_t j = 0; j < m; ++j) {
            model.class_means(c, j) /= static_cast<double>(rows.size());
            model.global_mean[j] +=
                model.class_means(c, j) * static_cast<double>(rows.size());
        }
        ++c;
    }
    for (double& v : model.global_mean) v /= static_cast<double>(n);

    // Within-class scatter, accumulated class by class in sample order.
    DenseMatrix sw(m, m);
    std::vector<double> d(m);
    c = 0;
    for (const auto& [label, rows] : groups) {
        for (std::size_t i : rows) {
            auto r = X.row(i);
            for (std::size_t j = 0; j < m; ++j) d[j] = r[j] - model.class_means(c, j);
            for (std::size_t j = 0; j < m; ++j) {
                const double dj = d[j];
                for (std::size_t k = j; k < m; ++k) sw(j, k) += dj * d[k];
            }
        }
        ++c;
    }
    for (std::size_t j = 0; j < m; ++j)
        for (std::size_t k = j + 1; k < m; ++k) sw(k, j) = sw(j, k);

    // Between-class scatter.
    DenseMatrix sb(m, m);
    for (c = 0; c < C; ++c) {
        const double nc = model.priors[c] * static_cast<double>(n);
        for (std::size_t j = 0; j < m; ++j) d[j] = model.class_means(c, j) - model.global_mean[j];
        for (std::size_t j = 0; j < m; ++j)
            for (std::size_t k = 0; k < m; ++k) sb(j, k) += nc * d[j] * d[k];
    }

    double trace = 0.0;
    for (std::size_t j = 0; j < m; ++j) trace += sw(j, j);
    model.ridge = 1e-8 * trace / static_cast<double>(m);

    model.whitener = cholesky(sw, model.ridge);

    // M = L^-1 S_B L^-T, symmetric; its eigenvectors map back to axes
    // a = L^-T u, which are then S_W-orthonormal by construction.
    DenseMatrix Z(m, m);
    std::vector<double> col(m);
    for (std::size_t j = 0; j < m; ++j) {
        for (std::size_t i = 0; i < m; ++i) col[i] = sb(i, j);
        const auto z = forward_substitute(model.whitener, col);
        for (std::size_t i = 0; i < m; ++i) Z(i, j) = z[i];
    }
    DenseMatrix M(m, m);
    for (std::size_t i = 0; i < m; ++i) {
        const auto z = forward_substitute(model.whitener, Z.row(i));
        for (std::size_t j = 0; j < m; ++j) M(i, j) = z[j];
    }
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = i + 1; j < m; ++j) {
            const double s = 0.5 * (M(i, j) + M(j, i));
            M(i, j) = s;
            M(j, i) = s;
        }

    const SymEigen eig = sym_eigen(M);
    const std::size_t n_axes = std::min(C - 1, m);
    model.axes = DenseMatrix(n_axes, m);
    model.axis_eigenvalues.resize(n_axes);
    for (std::size_t a = 0; a < n_axes; ++a) {
        model.axis_eigenvalues[a] = eig.eigenvalues[a];
        for (std::size_t i = 0; i < m; ++i) col[i] = eig.eigenvectors(i, a);
        const auto axis = back_substitute(model.whitener, col);
        std::size_t arg = 0;
        double best = 0.0;
        for (std::size_t i = 0; i < m; ++i)
            if (std::abs(axis[i]) > best) {
                best = std::abs(axis[i]);
                arg = i;
            }
        const double sign = axis[arg] < 0.0 ? -1.0 : 1.0;
        for (std::size_t i = 0; i < m; ++i) model.axes(a, i) = sign * axis[i];
    }

    // Shared-covariance scoring: Sigma = S_W / (n - C) + ridge I.
    DenseMatrix sigma = sw;
    const double inv = 1.0 / static_cast<double>(n - C);
    for (double& v : sigma.data()) v *= inv;
    const DenseMatrix sigma_chol = cholesky(sigma, model.ridge);
    model.score_w = DenseMatrix(C, m);
    model.score_b.resize(C);
    for (c = 0; c < C; ++c) {
        const auto w = cholesky_solve(sigma_chol, model.class_means.row(c));
        double b = 0.0;
        for (std::size_t j = 0; j < m; ++j) {
            model.score_w(c, j) = w[j];
            b += model.class_means(c, j) * w[j];
        }
        model.score_b[c] = -0.5 * b + std::log(model.priors[c]);
    }
    return model;
}

/// Projection of v onto the discriminant axes (v is centered on the
/// global mean first).
inline std::vector<double> lda_transform(const LdaModel& model, std::span<const double> v) {
    if (v.size() != model.dim()) throw std::invalid_argument("lda_transform: dimension mismatch");
    std::vector<double> out(model.axes.rows(), 0.0);
    for (std::size_t a = 0; a < model.axes.rows(); ++a) {
        double s = 0.0;
        for (std::size_t j = 0; j < model.dim(); ++j)
            s += model.axes(a, j) * (v[j] - model.global_mean[j]);
        out[a] = s;
    }
    return out;
}

/// Predicted class label; ties break toward the smaller label.
inline int predict(const LdaModel& model, std::span<const double> v,
                   LdaRule rule = LdaRule::SharedCovariance) {
    if (v.size() != model.dim()) throw std::invalid_argument("predict: dimension mismatch");
    std::size_t best = 0;
    if (rule == LdaRule::SharedCovariance) {
        double best_score = 0.0;
        for (std::size_t c = 0; c < model.n_classes(); ++c) {
            double s = model.score_b[c];
            for (std::size_t j = 0; j < model.dim(); ++j) s += model.score_w(c, j) * v[j];
            if (c == 0 || s > best_score) {
                best_score = s;
                best = c;
            }
        }
    } else {
        const auto z = lda_transform(model, v);
        double best_d2 = 0.0;
        for (std::size_t c = 0; c < model.n_classes(); ++c) {
            const auto zc = lda_transform(model, model.class_means.row(c));
            double d2 = 0.0;
            for (std::size_t a = 0; a < z.size(); ++a) d2 += (z[a] - zc[a]) * (z[a] - zc[a]);
            if (c == 0 || d2 < best_d2) {
                best_d2 = d2;
                best = c;
            }
        }
    }
    return model.classes[best];
}

inline std::vector<int> predict_rows(const LdaModel& model, const DenseMatrix& X,
                                     LdaRule rule = LdaRule::SharedCovariance) {
    std::vector<int> out(X.rows());
    for (std::size_t i = 0; i < X.rows(); ++i) out[i] = predict(model, X.row(i), rule);
    return out;
}

/// Per-axis explained-variance ratios; the first entry is the headline
/// number the experiment reports print.
inline std::vector<double> explained_variance(const LdaModel& model) {
    double total = 0.0;
    for (double lam : model.axis_eigenvalues) total += std::max(lam, 0.0);
    if (total == 0.0) throw std::runtime_error("explained_variance: all axis eigenvalues are zero");
    std::vector<double> ratios(model.axis_eigenvalues.size());
    for (std::size_t i = 0; i < ratios.size(); ++i)
        ratios[i] = std::max(model.axis_eigenvalues[i], 0.0) / total;
    return ratios;
}

struct ClassificationReport {
    double accuracy = 0.0;
    std::vector<int> classes;
    std::vector<std::vector<std::size_t>> confusion;  // [true][predicted]
};

inline ClassificationReport evaluate(const LdaModel& model, const DenseMatrix& X,
                                     const std::vector<int>& y,
                                     LdaRule rule = LdaRule::SharedCovariance) {
    if (X.rows() == 0) throw std::invalid_argument("evaluate: empty input");
    if (y.size() != X.rows()) throw std::invalid_argument("evaluate: label count mismatch");

    ClassificationReport rep;
    rep.classes = model.classes;
    rep.confusion.assign(model.n_classes(), std::vector<std::size_t>(model.n_classes(), 0));
    auto class_index = [&](int label) {
        const auto it = std::lower_bound(model.classes.begin(), model.classes.end(), label);
        if (it == model.classes.end() || *it != label)
            throw std::invalid_argument("evaluate: label " + std::to_string(label) +
                                        " unseen at fit time");
        return static_cast<std::size_t>(it - model.classes.begin());
    };

    std::size_t correct = 0;
    for (std::size_t i = 0; i < X.rows(); ++i) {
        const int pred = predict(model, X.row(i), rule);
        if (pred == y[i]) ++correct;
        ++rep.confusion[class_index(y[i])][class_index(pred)];
    }
    rep.accuracy = static_cast<double>(correct) / static_cast<double>(X.rows());
    return rep;
}

inline nlohmann::ordered_json lda_to_json(const LdaModel& model) {
    nlohmann::ordered_json doc;
    doc["format_version"] = 1;
    doc["kind"] = "lda";
    doc["dim"] = model.dim();
    doc["classes"] = model.classes;
    doc["priors"] = model.priors;
    doc["global_mean"] = model.global_mean;
    doc["ridge"] = model.ridge;
    doc["axis_eigenvalues"] = model.axis_eigenvalues;
    auto matrix_rows = [](const DenseMatrix& M) {
        auto rows = nlohmann::ordered_json::array();
        for (std::size_t i = 0; i < M.rows(); ++i) {
            auto r = M.row(i);
            rows.push_back(std::vector<double>(r.begin(), r.end()));
        }
        return rows;
    };
    doc["class_means"] = matrix_rows(model.class_means);
    doc["axes"] = matrix_rows(model.axes);
    doc["whitener"] = matrix_rows(model.whitener);
    doc["score_w"] = matrix_rows(model.score_w);
    doc["score_b"] = model.score_b;
    return doc;
}

inline LdaModel lda_from_json(const nlohmann::json& doc) {
    if (!doc.is_object() || doc.value("kind", "") != "lda" || doc.value("format_version", 0) != 1)
        throw std::invalid_argument("lda_from_json: not a v1 lda model");
    LdaModel model;
    model.classes = doc.at("classes").get<std::vector<int>>();
    model.priors = doc.at("priors").get<std::vector<double>>();
    model.global_mean = doc.at("global_mean").get<std::vector<double>>();
    model.ridge = doc.at("ridge").get<double>();
    model.axis_eigenvalues = doc.at("axis_eigenvalues").get<std::vector<double>>();
    auto matrix = [&](const char* key) {
        return DenseMatrix::from_rows(doc.at(key).get<std::vector<std::vector<double>>>());
    };
    model.class_means = matrix("class_means");
    model.axes = matrix("axes");
    model.whitener = matrix("whitener");
    model.score_w = matrix("score_w");
    model.score_b = doc.at("score_b").get<std::vector<double>>();
    if (model.class_means.rows() != model.classes.size() ||
        model.score_b.size() != model.classes.size())
        throw std::invalid_argument("lda_from_json: inconsistent shapes");
    return model;
}

} // namespace murmurforge
