#pragma once

#include <Eigen/Core>

#include <limits>
#include <optional>
#include <string>
#include <vector>

namespace clab::regression {

struct DesignMatrix {
    Eigen::MatrixXd x; // n observations x p predictors, no intercept column
    std::vector<std::string> names;
    bool intercept = true;

    void validate() const;
};

struct Coefficient {
    std::string name;
    double estimate = 0.0;
    double std_error = 0.0;
    std::optional<double> t;       // empty on an exact fit
    std::optional<double> p_value; // empty on an exact fit
};

struct RegressionResult {
    std::vector<Coefficient> coefficients; // "(intercept)" first when present
    double r_squared = 0.0;
    double adj_r_squared = 0.0;
    int df_residual = 0;
    std::size_t n = 0;
    bool exact_fit = false;
    std::vector<double> vif; // per predictor (not intercept); +inf marks perfect collinearity

    const Coefficient& coef(const std::string& name) const;
};

DesignMatrix standardize(const DesignMatrix& x);

RegressionResult ols_fit(const DesignMatrix& x, const Eigen::VectorXd& y);

// +infinity for a column that is a perfect linear combination of the others.
std::vector<double> vif(const DesignMatrix& x);

inline bool is_infinite_vif(double v) { return v == std::numeric_limits<double>::infinity(); }

// Property -> shift analysis ---------------------------------------------------

inline const std::vector<std::string>& property_names() {
    static const std::vector<std::string> names = {"semantic_diversity", "lexical_diversity", "gaussianity",
                                                   "quality",            "positivity",        "text_length"};
    return names;
}

struct Observation {
    std::string cluster_id;
    std::string domain;
    double ratio = 0.0;
    std::vector<double> properties; // aligned with property_names()
    double rel_diversity = 0.0;
    double rel_quality = 0.0;
};

enum class Grouping { all, per_dataset_per_ratio, cross_domain_18 };
Grouping parse_grouping(const std::string& s);

struct GroupRegression {
    std::string group;     // e.g. "all", "wikipedia|0.125", "reddit<-all|0.25"
    std::string dependent; // "rel_diversity" or "rel_quality"
    std::optional<RegressionResult> result;
    std::string notice; // why the group was skipped
};

// Averages duplicate (cluster, domain, ratio) rows (one per seed) first.
std::vector<Observation> average_seeds(const std::vector<Observation>& obs);

std::vector<GroupRegression> property_shift_regression(const std::vector<Observation>& obs, Grouping grouping,
                                                       bool standardized = true);

// Significance stars at 0.05 / 0.01 / 0.001 (uncorrected p values).
std::string significance_stars(std::optional<double> p);

// Plain-text table: predictors as rows, one column per regression.
std::string render_table(const std::vector<GroupRegression>& results);

} // namespace clab::regression
