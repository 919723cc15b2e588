#pragma once

#include "vmp/grid_noise.hpp"
#include "vmp/models.hpp"
#include "vmp/volterra.hpp"

#include <Eigen/Dense>

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace vmp {

struct RegressionBasis {
    int degree = 3;
    double ridge = 1e-8;
};

// Raw explanatory variables at one node, one column per variable. The
// default set is B(t_i), then X(t_i) when states are supplied, then eta(t_i)
// when jumps are active.
struct FeatureMatrix {
    std::size_t rows = 0;
    std::vector<std::string> names;
    std::vector<std::vector<double>> columns;

    std::size_t variables() const { return columns.size(); }
    int index_of(const std::string& name) const;
    void add(std::string name, std::vector<double> column);
};

FeatureMatrix node_features(const PathBundle& paths, std::size_t node, const StateEnsemble* states = nullptr);

// Standardize the usable raw variables and expand them into all monomials of
// total degree <= d. Constant variables and near-duplicates (|corr| > 1-1e-9)
// are dropped.
class MonomialMap {
public:
    MonomialMap() = default;
    MonomialMap(const FeatureMatrix& raw, int degree);

    std::size_t dimension() const { return terms_; }
    std::size_t raw_variables() const { return raw_variables_; }
    const std::vector<std::size_t>& active() const { return active_; }

    void evaluate(std::span<const double> raw, std::span<double> phi) const;
    // d phi_b / d raw_r for every basis function b, laid out [b * raw + r].
    void jacobian(std::span<const double> raw, std::span<double> jac) const;

private:
    std::size_t raw_variables_ = 0;
    int degree_ = 0;
    std::size_t terms_ = 1;
    std::vector<std::size_t> active_;
    std::vector<double> center_, scale_;
    std::vector<int> exponents_; // [term * active + a]
};

// A fitted conditional expectation as an explicit polynomial in raw features.
class Surrogate {
public:
    Surrogate() = default;
    Surrogate(MonomialMap map, std::vector<double> coef) : map_(std::move(map)), coef_(std::move(coef)) {}

    double value(std::span<const double> raw) const;
    void gradient(std::span<const double> raw, std::span<double> grad) const;
    std::size_t raw_variables() const { return map_.raw_variables(); }
    const std::vector<double>& coefficients() const { return coef_; }
    bool empty() const { return coef_.empty(); }

private:
    MonomialMap map_;
    std::vector<double> coef_;
};

// Ridge least squares on one node's design. The Gram matrix is factored once
// and reused for every right-hand side.
class NodeRegression {
public:
    NodeRegression(const FeatureMatrix& raw, const RegressionBasis& basis);

    std::size_t dimension() const { return static_cast<std::size_t>(design_.cols()); }
    std::size_t rows() const { return static_cast<std::size_t>(design_.rows()); }

    std::vector<double> coefficients(std::span<const double> y) const;
    std::vector<double> fitted(std::span<const double> y) const;
    std::vector<double> predict(std::span<const double> coef) const;
    // Column-wise projection of several targets at once.
    Eigen::MatrixXd fitted(const Eigen::MatrixXd& Y) const;
    Surrogate fit(std::span<const double> y) const;
    const MonomialMap& map() const { return map_; }

private:
    MonomialMap map_;
    Eigen::MatrixXd design_;
    Eigen::LDLT<Eigen::MatrixXd> gram_;
};

// E[values | G_i] with features taken at the information node of i.
std::vector<double> conditional_expectation(std::span<const double> values, std::size_t node,
                                            const RegressionBasis& basis, const PathBundle& paths,
                                            const InfoMode& info = InfoMode::full(),
                                            const StateEnsemble* states = nullptr);

} // namespace vmp
