#pragma once

#include <cstddef>
#include <cstdio>
#include <ostream>
#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

#include <json.hpp>

#include "murmurforge/linalg.hpp"
#include "murmurforge/prime_basis.hpp"

namespace murmurforge {

/// Principal components of a pointcloud: orthonormal component rows in
/// descending eigenvalue order, with explained-variance ratios taken
/// against the full spectrum.
struct PcaModel {
    std::vector<double> mean;             // dim
    DenseMatrix components;               // k x dim, orthonormal rows
    std::vector<double> eigenvalues;      // k, descending
    std::vector<double> explained_ratio;  // k, eigenvalue_i / sum of all m eigenvalues

    std::size_t dim() const { return mean.size(); }
    std::size_t k() const { return components.rows(); }
};

inline PcaModel fit_pca(const DenseMatrix& X, std::size_t k) {
    if (X.rows() < 2) throw std::invalid_argument("fit_pca: need at least 2 rows");
    if (k < 1 || k > X.cols()) throw std::invalid_argument("fit_pca: k out of range");

    PcaModel model;
    model.mean.assign(X.cols(), 0.0);
    for (std::size_t i = 0; i < X.rows(); ++i) {
        auto r = X.row(i);
        for (std::size_t j = 0; j < X.cols(); ++j) model.mean[j] += r[j];
    }
    for (double& v : model.mean) v /= static_cast<double>(X.rows());

    const SymEigen eig = sym_eigen(covariance(X));
    double total = 0.0;
    for (double lam : eig.eigenvalues) total += lam;

    model.components = DenseMatrix(k, X.cols());
    model.eigenvalues.resize(k);
    model.explained_ratio.resize(k);
    for (std::size_t i = 0; i < k; ++i) {
        model.eigenvalues[i] = eig.eigenvalues[i];
        model.explained_ratio[i] = total != 0.0 ? eig.eigenvalues[i] / total : 0.0;
        for (std::size_t j = 0; j < X.cols(); ++j)
            model.components(i, j) = eig.eigenvectors(j, i);
    }
    return model;
}

/// Projection onto the components: output_i = <components_i, v - mean>.
inline std::vector<double> project(const PcaModel& model, std::span<const double> v) {
    if (v.size() != model.dim()) throw std::invalid_argument("project: dimension mismatch");
    std::vector<double> out(model.k(), 0.0);
    for (std::size_t i = 0; i < model.k(); ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < model.dim(); ++j)
            s += model.components(i, j) * (v[j] - model.mean[j]);
        out[i] = s;
    }
    return out;
}

inline DenseMatrix project_rows(const PcaModel& model, const DenseMatrix& X) {
    if (X.cols() != model.dim()) throw std::invalid_argument("project_rows: dimension mismatch");
    DenseMatrix out(X.rows(), model.k());
    for (std::size_t r = 0; r < X.rows(); ++r) {
        const auto p = project(model, X.row(r));
        for (std::size_t i = 0; i < model.k(); ++i) out(r, i) = p[i];
    }
    return out;
}

/// Per-prime weights of component i; valid for models fit on the 168-prime
/// feature space.
inline std::vector<std::pair<int, double>> component_weights(const PcaModel& model,
                                                             std::size_t i) {
    if (i >= model.k()) throw std::out_of_range("component_weights: index out of range");
    if (model.dim() != kPrimeCount)
        throw std::invalid_argument("component_weights: model is not prime-indexed");
    PrimeBasis basis;
    std::vector<std::pair<int, double>> out;
    out.reserve(kPrimeCount);
    for (std::size_t j = 0; j < kPrimeCount; ++j)
        out.emplace_back(basis[j], model.components(i, j));
    return out;
}

/// CSV of all component weights: header "p,pc1,...,pck", one row per prime.
inline void write_weights_csv(const PcaModel& model, std::ostream& out) {
    if (model.dim() != kPrimeCount)
        throw std::invalid_argument("write_weights_csv: model is not prime-indexed");
    PrimeBasis basis;
    out << "p";
    for (std::size_t i = 0; i < model.k(); ++i) out << ",pc" << (i + 1);
    out << "\n";
    char buf[40];
    for (std::size_t j = 0; j < kPrimeCount; ++j) {
        out << basis[j];
        for (std::size_t i = 0; i < model.k(); ++i) {
            std::snprintf(buf, sizeof buf, "%.17g", model.components(i, j));
            out << ',' << buf;
        }
        out << "\n";
    }
}

inline nlohmann::ordered_json pca_to_json(const PcaModel& model) {
    nlohmann::ordered_json doc;
    doc["format_version"] = 1;
    doc["kind"] = "pca";
    doc["dim"] = model.dim();
    doc["k"] = model.k();
    doc["mean"] = model.mean;
    doc["eigenvalues"] = model.eigenvalues;
    doc["explained_ratio"] = model.explained_ratio;
    auto rows = nlohmann::ordered_json::array();
    for (std::size_t i = 0; i < model.k(); ++i) {
        auto row = model.components.row(i);
        rows.push_back(std::vector<double>(row.begin(), row.end()));
    }
    doc["components"] = std::move(rows);
    return doc;
}

inline PcaModel pca_from_json(const nlohmann::json& doc) {
    if (!doc.is_object() || doc.value("kind", "") != "pca" || doc.value("format_version", 0) != 1)
        throw std::invalid_argument("pca_from_json: not a v1 pca model");
    PcaModel model;
    model.mean = doc.at("mean").get<std::vector<double>>();
    model.eigenvalues = doc.at("eigenvalues").get<std::vector<double>>();
    model.explained_ratio = doc.at("explained_ratio").get<std::vector<double>>();
    const auto rows = doc.at("components").get<std::vector<std::vector<double>>>();
    model.components = DenseMatrix::from_rows(rows);
    if (model.components.rows() != model.eigenvalues.size() ||
        (model.components.rows() > 0 && model.components.cols() != model.mean.size()))
        throw std::invalid_argument("pca_from_json: inconsistent shapes");
    return model;
}

} // namespace murmurforge
