#include "vmp/regression.hpp"

#include "vmp/error.hpp"
#include "vmp/parallel.hpp"
#include "vmp/stats.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>

namespace vmp {

int FeatureMatrix::index_of(const std::string& name) const {
    for (std::size_t r = 0; r < names.size(); ++r)
        if (names[r] == name) return static_cast<int>(r);
    return -1;
}

void FeatureMatrix::add(std::string name, std::vector<double> column) {
    if (columns.empty()) rows = column.size();
    if (column.size() != rows) throw ContractViolation("feature column '" + name + "' has the wrong length");
    names.push_back(std::move(name));
    columns.push_back(std::move(column));
}

FeatureMatrix node_features(const PathBundle& paths, std::size_t node, const StateEnsemble* states) {
    FeatureMatrix f;
    f.add("B", paths.brownian_at(node));
    if (states) f.add("X", states->column(node));
    if (paths.jump_model().active()) f.add("eta", paths.eta_at(node));
    return f;
}

namespace {

// Exponent tuples of all monomials in `vars` variables with total degree <= degree,
// ordered by total degree.
void graded_exponents(std::size_t vars, int degree, std::vector<int>& out) {
    std::vector<int> e(vars, 0);
    std::function<void(std::size_t, int)> rec = [&](std::size_t pos, int left) {
        if (pos + 1 == vars) {
            e[pos] = left;
            out.insert(out.end(), e.begin(), e.end());
            return;
        }
        for (int a = left; a >= 0; --a) {
            e[pos] = a;
            rec(pos + 1, left - a);
        }
    };
    for (int total = 0; total <= degree; ++total) rec(0, total);
}

} // namespace

MonomialMap::MonomialMap(const FeatureMatrix& raw, int degree) : raw_variables_(raw.variables()), degree_(degree) {
    if (degree < 0) throw ConfigError("basis degree must be >= 0");
    for (std::size_t r = 0; r < raw.variables(); ++r) {
        const auto& col = raw.columns[r];
        double mu = mean(col), sd = stddev(col);
        if (!(sd > 1e-12 * (1.0 + std::abs(mu)))) continue;
        bool duplicate = false;
        for (std::size_t a : active_)
            if (std::abs(correlation(col, raw.columns[a])) > 1.0 - 1e-9) duplicate = true;
        if (duplicate) continue;
        active_.push_back(r);
        center_.push_back(mu);
        scale_.push_back(sd);
    }
    if (active_.empty()) {
        terms_ = 1;
        return;
    }
    graded_exponents(active_.size(), degree, exponents_);
    terms_ = exponents_.size() / active_.size();
}

void MonomialMap::evaluate(std::span<const double> raw, std::span<double> phi) const {
    if (active_.empty()) {
        phi[0] = 1.0;
        return;
    }
    std::size_t A = active_.size();
    double pw[8][8];
    for (std::size_t a = 0; a < A; ++a) {
        double z = (raw[active_[a]] - center_[a]) / scale_[a];
        pw[a][0] = 1.0;
        for (int e = 1; e <= degree_; ++e) pw[a][e] = pw[a][e - 1] * z;
    }
    for (std::size_t b = 0; b < terms_; ++b) {
        double v = 1.0;
        for (std::size_t a = 0; a < A; ++a) v *= pw[a][exponents_[b * A + a]];
        phi[b] = v;
    }
}

void MonomialMap::jacobian(std::span<const double> raw, std::span<double> jac) const {
    std::fill(jac.begin(), jac.end(), 0.0);
    if (active_.empty()) return;
    std::size_t A = active_.size();
    double pw[8][8];
    for (std::size_t a = 0; a < A; ++a) {
        double z = (raw[active_[a]] - center_[a]) / scale_[a];
        pw[a][0] = 1.0;
        for (int e = 1; e <= degree_; ++e) pw[a][e] = pw[a][e - 1] * z;
    }
    for (std::size_t b = 0; b < terms_; ++b) {
        const int* ex = &exponents_[b * A];
        for (std::size_t a = 0; a < A; ++a) {
            if (ex[a] == 0) continue;
            double d = ex[a] * pw[a][ex[a] - 1] / scale_[a];
            for (std::size_t o = 0; o < A; ++o)
                if (o != a) d *= pw[o][ex[o]];
            jac[b * raw_variables_ + active_[a]] = d;
        }
    }
}

double Surrogate::value(std::span<const double> raw) const {
    double phi[64];
    map_.evaluate(raw, {phi, map_.dimension()});
    double v = 0.0;
    for (std::size_t b = 0; b < coef_.size(); ++b) v += coef_[b] * phi[b];
    return v;
}

void Surrogate::gradient(std::span<const double> raw, std::span<double> grad) const {
    std::size_t R = map_.raw_variables(), D = map_.dimension();
    std::vector<double> jac(D * R);
    map_.jacobian(raw, jac);
    for (std::size_t r = 0; r < R; ++r) {
        double g = 0.0;
        for (std::size_t b = 0; b < D; ++b) g += coef_[b] * jac[b * R + r];
        grad[r] = g;
    }
}

NodeRegression::NodeRegression(const FeatureMatrix& raw, const RegressionBasis& basis) {
    if (basis.degree > 7) throw ConfigError("basis degree above 7 is not supported");
    if (raw.variables() > 8) throw ConfigError("at most 8 raw regression features are supported");
    if (!(basis.ridge >= 0.0)) throw ConfigError("ridge parameter must be >= 0");
    map_ = MonomialMap(raw, basis.degree);
    std::size_t M = raw.rows, D = map_.dimension();
    if (D > 64) throw ConfigError("regression basis has more than 64 functions; reduce the degree");
    if (M < 10 * D)
        throw RegressionError("regression needs at least 10 x basis dimension = " + std::to_string(10 * D) +
                              " paths, got " + std::to_string(M) + "; reduce the basis degree or add paths");
    design_.resize(static_cast<Eigen::Index>(M), static_cast<Eigen::Index>(D));
    std::size_t R = raw.variables();
    parallel_for(M, [&](std::size_t begin, std::size_t end) {
        std::vector<double> row(R), phi(D);
        for (std::size_t m = begin; m < end; ++m) {
            for (std::size_t r = 0; r < R; ++r) row[r] = raw.columns[r][m];
            map_.evaluate(row, phi);
            for (std::size_t b = 0; b < D; ++b) design_(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(b)) = phi[b];
        }
    });
    Eigen::MatrixXd G = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(D), static_cast<Eigen::Index>(D));
    G.selfadjointView<Eigen::Lower>().rankUpdate(design_.transpose(), 1.0 / static_cast<double>(M));
    G = G.selfadjointView<Eigen::Lower>();
    for (Eigen::Index b = 1; b < G.rows(); ++b) G(b, b) += basis.ridge;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(G, Eigen::EigenvaluesOnly);
    double lmin = eig.eigenvalues().minCoeff(), lmax = eig.eigenvalues().maxCoeff();
    if (!(lmin > 1e-13 * lmax))
        throw RegressionError("regression design is rank deficient (eigenvalue ratio " + std::to_string(lmin / lmax) +
                              "); reduce the basis degree");
    gram_.compute(G);
}

std::vector<double> NodeRegression::coefficients(std::span<const double> y) const {
    if (y.size() != rows()) throw ContractViolation("regression target has the wrong length");
    Eigen::Map<const Eigen::VectorXd> Y(y.data(), static_cast<Eigen::Index>(y.size()));
    Eigen::VectorXd rhs = design_.transpose() * Y / static_cast<double>(rows());
    Eigen::VectorXd c = gram_.solve(rhs);
    return std::vector<double>(c.data(), c.data() + c.size());
}

std::vector<double> NodeRegression::fitted(std::span<const double> y) const {
    auto c = coefficients(y);
    Eigen::Map<const Eigen::VectorXd> C(c.data(), static_cast<Eigen::Index>(c.size()));
    Eigen::VectorXd f = design_ * C;
    return std::vector<double>(f.data(), f.data() + f.size());
}

std::vector<double> NodeRegression::predict(std::span<const double> coef) const {
    Eigen::Map<const Eigen::VectorXd> C(coef.data(), static_cast<Eigen::Index>(coef.size()));
    Eigen::VectorXd f = design_ * C;
    return std::vector<double>(f.data(), f.data() + f.size());
}

Eigen::MatrixXd NodeRegression::fitted(const Eigen::MatrixXd& Y) const {
    if (static_cast<std::size_t>(Y.rows()) != rows()) throw ContractViolation("regression target has the wrong length");
    Eigen::MatrixXd rhs = design_.transpose() * Y / static_cast<double>(rows());
    Eigen::MatrixXd C = gram_.solve(rhs);
    return design_ * C;
}

Surrogate NodeRegression::fit(std::span<const double> y) const { return Surrogate(map_, coefficients(y)); }

std::vector<double> conditional_expectation(std::span<const double> values, std::size_t node,
                                            const RegressionBasis& basis, const PathBundle& paths,
                                            const InfoMode& info, const StateEnsemble* states) {
    std::size_t at = info.feature_node(node, paths.grid());
    NodeRegression reg(node_features(paths, at, states), basis);
    return reg.fitted(values);
}

} // namespace vmp
