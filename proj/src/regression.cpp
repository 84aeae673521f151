#include "collapse_lab/regression.hpp"

#include <Eigen/LU>
#include <Eigen/QR>
#include <boost/math/distributions/students_t.hpp>

#include <cmath>
#include <map>
#include <set>
#include <sstream>
#include <tuple>

#include "collapse_lab/csv.hpp"
#include "collapse_lab/errors.hpp"

namespace clab::regression {

void DesignMatrix::validate() const {
    const auto p = x.cols();
    if (static_cast<std::size_t>(p) != names.size()) throw InvalidInput("design matrix: name count != column count");
    if (p < 1) throw InvalidInput("design matrix has no predictor");
    if (x.rows() <= p + (intercept ? 1 : 0)) throw InvalidInput("design matrix needs more observations than parameters");
    if (!x.allFinite()) throw InvalidInput("design matrix contains non-finite entries");
    std::set<std::string> seen;
    for (const auto& n : names)
        if (!seen.insert(n).second) throw InvalidInput("duplicate predictor name '" + n + "'");
}

const Coefficient& RegressionResult::coef(const std::string& name) const {
    for (const auto& c : coefficients)
        if (c.name == name) return c;
    throw InvalidInput("no coefficient named '" + name + "'");
}

DesignMatrix standardize(const DesignMatrix& in) {
    DesignMatrix out = in;
    const double n = static_cast<double>(in.x.rows());
    if (in.x.rows() < 2) throw InvalidInput("standardize needs at least 2 rows");
    for (Eigen::Index j = 0; j < in.x.cols(); ++j) {
        const double mean = in.x.col(j).mean();
        const Eigen::VectorXd c = in.x.col(j).array() - mean;
        const double sd = std::sqrt(c.squaredNorm() / (n - 1.0));
        if (!(sd > 1e-14 * (std::abs(mean) + 1.0)))
            throw InvalidInput("column '" + in.names[static_cast<std::size_t>(j)] + "' has zero variance");
        out.x.col(j) = c / sd;
    }
    return out;
}

namespace {

Eigen::MatrixXd with_intercept(const DesignMatrix& d) {
    if (!d.intercept) return d.x;
    Eigen::MatrixXd a(d.x.rows(), d.x.cols() + 1);
    a.col(0).setOnes();
    a.rightCols(d.x.cols()) = d.x;
    return a;
}

double residual_r2(const Eigen::MatrixXd& a, const Eigen::VectorXd& y, bool centered) {
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(a);
    const Eigen::VectorXd beta = qr.solve(y);
    const double ssr = (y - a * beta).squaredNorm();
    const double sst = centered ? (y.array() - y.mean()).matrix().squaredNorm() : y.squaredNorm();
    if (!(sst > 0.0)) return 1.0;
    return 1.0 - ssr / sst;
}

} // namespace

std::vector<double> vif(const DesignMatrix& d) {
    const Eigen::Index p = d.x.cols();
    if (p < 2) throw InvalidInput("vif needs at least 2 predictors");
    if (d.x.rows() <= p) throw InvalidInput("vif needs n > p");
    if (!d.x.allFinite()) throw InvalidInput("vif: non-finite entries");
    std::vector<double> out;
    out.reserve(static_cast<std::size_t>(p));
    for (Eigen::Index j = 0; j < p; ++j) {
        Eigen::MatrixXd others(d.x.rows(), p);
        others.col(0).setOnes();
        Eigen::Index c = 1;
        for (Eigen::Index k = 0; k < p; ++k)
            if (k != j) others.col(c++) = d.x.col(k);
        const double r2 = residual_r2(others, d.x.col(j), true);
        const double tol = 1.0 - r2;
        out.push_back(tol <= 1e-12 ? std::numeric_limits<double>::infinity() : 1.0 / tol);
    }
    return out;
}

RegressionResult ols_fit(const DesignMatrix& d, const Eigen::VectorXd& y) {
    d.validate();
    if (y.size() != d.x.rows()) throw InvalidInput("response length does not match design rows");
    if (!y.allFinite()) throw InvalidInput("response contains non-finite entries");

    const Eigen::MatrixXd a = with_intercept(d);
    const Eigen::Index n = a.rows(), k = a.cols();
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(a);
    qr.setThreshold(1e-10);
    if (qr.rank() < k) {
        // Columns with weight in the null space are the ones caught in a dependency.
        Eigen::FullPivLU<Eigen::MatrixXd> lu(a);
        lu.setThreshold(1e-10);
        const Eigen::MatrixXd kernel = lu.kernel();
        std::string cols;
        for (Eigen::Index c = 0; c < k; ++c) {
            if (kernel.row(c).cwiseAbs().maxCoeff() <= 1e-8) continue;
            const std::string name = d.intercept ? (c == 0 ? "(intercept)" : d.names[static_cast<std::size_t>(c - 1)])
                                                 : d.names[static_cast<std::size_t>(c)];
            cols += (cols.empty() ? "" : ", ") + name;
        }
        throw RankDeficient("design matrix is rank deficient; dependent columns: " + cols);
    }

    const Eigen::VectorXd beta = qr.solve(y);
    const Eigen::VectorXd resid = y - a * beta;
    const double ssr = resid.squaredNorm();
    const double sst = d.intercept ? (y.array() - y.mean()).matrix().squaredNorm() : y.squaredNorm();

    RegressionResult res;
    res.n = static_cast<std::size_t>(n);
    res.df_residual = static_cast<int>(n - k);
    res.exact_fit = ssr <= 1e-24 * std::max(1.0, y.squaredNorm());
    res.r_squared = sst > 0.0 ? std::clamp(1.0 - ssr / sst, 0.0, 1.0) : 1.0;
    res.adj_r_squared = 1.0 - (1.0 - res.r_squared) * (static_cast<double>(n) - 1.0) / static_cast<double>(res.df_residual);

    // (A^T A)^{-1} = P R^{-1} R^{-T} P^T
    const Eigen::MatrixXd r = qr.matrixR().topLeftCorner(k, k).triangularView<Eigen::Upper>();
    const Eigen::MatrixXd rinv = r.triangularView<Eigen::Upper>().solve(Eigen::MatrixXd::Identity(k, k));
    const Eigen::MatrixXd cov_perm = rinv * rinv.transpose();
    Eigen::MatrixXd cov(k, k);
    const auto& perm = qr.colsPermutation().indices();
    for (Eigen::Index i = 0; i < k; ++i)
        for (Eigen::Index j = 0; j < k; ++j) cov(perm(i), perm(j)) = cov_perm(i, j);

    const double sigma2 = ssr / static_cast<double>(res.df_residual);
    boost::math::students_t dist(static_cast<double>(res.df_residual));
    for (Eigen::Index i = 0; i < k; ++i) {
        Coefficient c;
        c.name = d.intercept ? (i == 0 ? "(intercept)" : d.names[static_cast<std::size_t>(i - 1)]) : d.names[static_cast<std::size_t>(i)];
        c.estimate = beta(i);
        if (res.exact_fit) {
            c.std_error = 0.0;
        } else {
            c.std_error = std::sqrt(sigma2 * cov(i, i));
            const double t = c.estimate / c.std_error;
            c.t = t;
            c.p_value = std::clamp(2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(t))), 0.0, 1.0);
        }
        res.coefficients.push_back(std::move(c));
    }
    if (d.x.cols() >= 2)
        res.vif = vif(d);
    else
        res.vif = {1.0};
    return res;
}

// Property analysis -------------------------------------------------------------

Grouping parse_grouping(const std::string& s) {
    if (s == "all") return Grouping::all;
    if (s == "per-dataset-per-ratio") return Grouping::per_dataset_per_ratio;
    if (s == "cross-domain-18") return Grouping::cross_domain_18;
    throw InvalidInput("unknown grouping '" + s + "'");
}

std::vector<Observation> average_seeds(const std::vector<Observation>& obs) {
    using Key = std::tuple<std::string, std::string, double>;
    std::map<Key, std::pair<Observation, int>> acc;
    for (const auto& o : obs) {
        if (o.properties.size() != property_names().size())
            throw InvalidInput("observation for cluster '" + o.cluster_id + "' has wrong property count");
        auto [it, fresh] = acc.try_emplace(Key{o.domain, o.cluster_id, o.ratio}, o, 1);
        if (fresh) continue;
        auto& [sum, count] = it->second;
        for (std::size_t i = 0; i < sum.properties.size(); ++i) sum.properties[i] += o.properties[i];
        sum.rel_diversity += o.rel_diversity;
        sum.rel_quality += o.rel_quality;
        ++count;
    }
    std::vector<Observation> out;
    out.reserve(acc.size());
    for (auto& [key, v] : acc) {
        auto& [o, count] = v;
        for (double& p : o.properties) p /= count;
        o.rel_diversity /= count;
        o.rel_quality /= count;
        out.push_back(std::move(o));
    }
    return out;
}

namespace {

const char* const kDependents[] = {"rel_diversity", "rel_quality"};

double dependent_value(const Observation& o, int which) { return which == 0 ? o.rel_diversity : o.rel_quality; }

void regress_group(const std::string& label, const DesignMatrix& design, const std::vector<Eigen::VectorXd>& ys,
                   bool standardized, std::vector<GroupRegression>& out) {
    for (int which = 0; which < 2; ++which) {
        GroupRegression g;
        g.group = label;
        g.dependent = kDependents[which];
        const auto n = design.x.rows();
        const auto p = design.x.cols();
        if (n <= p + 2) {
            g.notice = "skipped: " + std::to_string(n) + " observations for " + std::to_string(p) + " predictors";
        } else {
            try {
                g.result = ols_fit(standardized ? standardize(design) : design, ys[static_cast<std::size_t>(which)]);
            } catch (const Error& e) {
                g.notice = std::string("skipped: ") + e.what();
            }
        }
        out.push_back(std::move(g));
    }
}

void regress_rows(const std::string& label, const std::vector<const Observation*>& rows, bool standardized,
                  std::vector<GroupRegression>& out) {
    const auto& names = property_names();
    DesignMatrix d;
    d.names = names;
    d.x.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(names.size()));
    std::vector<Eigen::VectorXd> ys(2, Eigen::VectorXd(static_cast<Eigen::Index>(rows.size())));
    for (std::size_t i = 0; i < rows.size(); ++i) {
        for (std::size_t j = 0; j < names.size(); ++j)
            d.x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i]->properties[j];
        for (int w = 0; w < 2; ++w) ys[static_cast<std::size_t>(w)](static_cast<Eigen::Index>(i)) = dependent_value(*rows[i], w);
    }
    regress_group(label, d, ys, standardized, out);
}

} // namespace

std::vector<GroupRegression> property_shift_regression(const std::vector<Observation>& raw, Grouping grouping,
                                                       bool standardized) {
    const auto obs = average_seeds(raw);
    std::vector<GroupRegression> out;

    if (grouping == Grouping::all) {
        std::vector<const Observation*> rows;
        for (const auto& o : obs) rows.push_back(&o);
        regress_rows("all", rows, standardized, out);
        return out;
    }

    if (grouping == Grouping::per_dataset_per_ratio) {
        std::map<std::pair<std::string, double>, std::vector<const Observation*>> groups;
        for (const auto& o : obs) groups[{o.domain, o.ratio}].push_back(&o);
        for (const auto& [key, rows] : groups)
            regress_rows(key.first + "|r=" + csv::format_double(key.second), rows, standardized, out);
        return out;
    }

    // cross-domain-18: one row per (mixed cluster, ratio); predictors are every
    // domain's six properties; one regression per target domain and dependent.
    std::map<double, std::map<std::string, std::map<std::string, const Observation*>>> by_ratio;
    std::set<std::string> domains;
    for (const auto& o : obs) {
        by_ratio[o.ratio][o.cluster_id][o.domain] = &o;
        domains.insert(o.domain);
    }
    const auto& props = property_names();
    for (const auto& [ratio, clusters] : by_ratio) {
        std::vector<const std::map<std::string, const Observation*>*> complete;
        for (const auto& [cid, per_domain] : clusters)
            if (per_domain.size() == domains.size()) complete.push_back(&per_domain);

        DesignMatrix d;
        for (const auto& dom : domains)
            for (const auto& p : props) d.names.push_back(dom + ":" + p);
        d.x.resize(static_cast<Eigen::Index>(complete.size()), static_cast<Eigen::Index>(d.names.size()));
        for (std::size_t i = 0; i < complete.size(); ++i) {
            Eigen::Index col = 0;
            for (const auto& dom : domains)
                for (std::size_t j = 0; j < props.size(); ++j) d.x(static_cast<Eigen::Index>(i), col++) = complete[i]->at(dom)->properties[j];
        }
        for (const auto& target : domains) {
            std::vector<Eigen::VectorXd> ys(2, Eigen::VectorXd(static_cast<Eigen::Index>(complete.size())));
            for (std::size_t i = 0; i < complete.size(); ++i)
                for (int w = 0; w < 2; ++w)
                    ys[static_cast<std::size_t>(w)](static_cast<Eigen::Index>(i)) = dependent_value(*complete[i]->at(target), w);
            const std::size_t before = out.size();
            regress_group(target + "|r=" + csv::format_double(ratio), d, ys, standardized, out);
            const std::size_t dropped = clusters.size() - complete.size();
            if (dropped > 0)
                for (std::size_t i = before; i < out.size(); ++i)
                    out[i].notice += (out[i].notice.empty() ? "" : "; ") + std::to_string(dropped) +
                                     " clusters lacking a domain were dropped";
        }
    }
    return out;
}

std::string significance_stars(std::optional<double> p) {
    if (!p) return "";
    if (*p < 0.001) return "***";
    if (*p < 0.01) return "**";
    if (*p < 0.05) return "*";
    return "";
}

std::string render_table(const std::vector<GroupRegression>& results) {
    std::vector<std::string> rows;
    std::set<std::string> seen;
    for (const auto& g : results) {
        if (!g.result) continue;
        for (const auto& c : g.result->coefficients)
            if (c.name != "(intercept)" && seen.insert(c.name).second) rows.push_back(c.name);
    }
    auto cell = [](const std::string& s, std::size_t w) { return s + std::string(w > s.size() ? w - s.size() : 1, ' '); };
    std::size_t w0 = 10;
    for (const auto& r : rows) w0 = std::max(w0, r.size() + 2);
    constexpr std::size_t w = 14;

    std::ostringstream os;
    os << cell("", w0);
    for (const auto& g : results) os << cell(g.group, std::max(w, g.group.size() + 2));
    os << '\n' << cell("", w0);
    for (const auto& g : results) os << cell(g.dependent, std::max(w, g.group.size() + 2));
    os << '\n';
    auto fmt = [](double v) {
        std::ostringstream s;
        s.setf(std::ios::fixed);
        s.precision(3);
        s << v;
        return s.str();
    };
    for (const auto& name : rows) {
        os << cell(name, w0);
        for (const auto& g : results) {
            std::string c = "-";
            if (g.result) {
                for (const auto& coef : g.result->coefficients)
                    if (coef.name == name) c = fmt(coef.estimate) + significance_stars(coef.p_value);
            }
            os << cell(c, std::max(w, g.group.size() + 2));
        }
        os << '\n';
    }
    os << cell("R^2", w0);
    for (const auto& g : results) os << cell(g.result ? fmt(g.result->r_squared) : "skipped", std::max(w, g.group.size() + 2));
    os << '\n' << cell("n", w0);
    for (const auto& g : results) os << cell(g.result ? std::to_string(g.result->n) : "-", std::max(w, g.group.size() + 2));
    os << "\n\n* p<0.05  ** p<0.01  *** p<0.001 (uncorrected)\n";
    return os.str();
}

} // namespace clab::regression
