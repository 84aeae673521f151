#include "collapse_lab/metrics.hpp"

#include <Eigen/Eigenvalues>
#include <boost/math/special_functions/digamma.hpp>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <unordered_map>
#include <unordered_set>

#include "collapse_lab/errors.hpp"
#include "collapse_lab/random.hpp"
#include "collapse_lab/records.hpp"
#include "collapse_lab/spatial.hpp"
#include "collapse_lab/text.hpp"

namespace clab::metrics {

void EmbeddingMatrix::validate() const {
    if (values.rows() < 1 || values.cols() < 1) throw InvalidInput("embedding matrix must be at least 1x1");
    if (!values.allFinite()) throw InvalidInput("embedding matrix contains non-finite entries");
    if (!ids.empty() && static_cast<Eigen::Index>(ids.size()) != values.rows())
        throw InvalidInput("embedding id count does not match row count");
}

namespace {

Eigen::MatrixXd unit_rows(const Eigen::MatrixXd& e) {
    if (!e.allFinite()) throw InvalidInput("embedding matrix contains non-finite entries");
    Eigen::MatrixXd u = e;
    for (Eigen::Index i = 0; i < u.rows(); ++i) {
        const double norm = u.row(i).norm();
        if (!(norm > 0.0)) throw InvalidInput("embedding row " + std::to_string(i) + " has zero norm");
        u.row(i) /= norm;
    }
    return u;
}

} // namespace

double cosine_diversity(const Eigen::MatrixXd& e) {
    if (e.rows() < 2) throw InvalidInput("cosine_diversity needs at least 2 rows");
    const Eigen::MatrixXd u = unit_rows(e);
    const Eigen::Index n = u.rows();
    double sum = 0.0;
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = i + 1; j < n; ++j) sum += 1.0 - u.row(i).dot(u.row(j));
    return sum / (static_cast<double>(n) * static_cast<double>(n - 1) / 2.0);
}

double knn_cosine_diversity(const Eigen::MatrixXd& e, int k) {
    const Eigen::Index n = e.rows();
    if (k < 1) throw InvalidInput("k must be >= 1");
    if (k >= n) throw InvalidInput("knn_cosine_diversity needs k < n (k=" + std::to_string(k) + ", n=" + std::to_string(n) + ")");
    const Eigen::MatrixXd u = unit_rows(e);
    std::vector<double> dist(static_cast<std::size_t>(n - 1));
    double total = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
        std::size_t m = 0;
        for (Eigen::Index j = 0; j < n; ++j)
            if (j != i) dist[m++] = 1.0 - u.row(i).dot(u.row(j));
        std::nth_element(dist.begin(), dist.begin() + (k - 1), dist.end());
        std::sort(dist.begin(), dist.begin() + k);
        double s = 0.0;
        for (int t = 0; t < k; ++t) s += dist[static_cast<std::size_t>(t)];
        total += s / k;
    }
    return total / static_cast<double>(n);
}

// BLEU ----------------------------------------------------------------------

namespace {

using NgramCounts = std::unordered_map<std::string, int>;

std::string ngram_key(std::span<const std::string> toks, std::size_t start, int n) {
    std::string key;
    for (int i = 0; i < n; ++i) {
        if (i) key.push_back('\x1f');
        key += toks[start + static_cast<std::size_t>(i)];
    }
    return key;
}

// counts[n-1] holds n-gram counts.
std::vector<NgramCounts> count_ngrams(std::span<const std::string> toks, int max_n) {
    std::vector<NgramCounts> out(static_cast<std::size_t>(max_n));
    for (int n = 1; n <= max_n; ++n) {
        if (toks.size() < static_cast<std::size_t>(n)) break;
        for (std::size_t s = 0; s + static_cast<std::size_t>(n) <= toks.size(); ++s) ++out[n - 1][ngram_key(toks, s, n)];
    }
    return out;
}

struct RefView {
    const std::vector<NgramCounts>* counts;
    std::size_t length;
};

double bleu_from_counts(const std::vector<NgramCounts>& cand, std::size_t cand_len, std::span<const RefView> refs,
                        int max_n, BleuSmoothing smoothing) {
    const int order = std::min<int>(max_n, static_cast<int>(cand_len));
    std::size_t best_len = 0;
    bool have_ref = false;
    for (const auto& r : refs) {
        if (r.length == 0) continue;
        const auto diff = [&](std::size_t l) { return l > cand_len ? l - cand_len : cand_len - l; };
        if (!have_ref || diff(r.length) < diff(best_len) || (diff(r.length) == diff(best_len) && r.length < best_len))
            best_len = r.length;
        have_ref = true;
    }
    if (!have_ref) return 0.0;

    double log_sum = 0.0;
    for (int n = 1; n <= order; ++n) {
        const auto& cn = cand[n - 1];
        long matched = 0;
        long total = 0;
        for (const auto& [gram, count] : cn) {
            total += count;
            int max_ref = 0;
            for (const auto& r : refs) {
                if (static_cast<std::size_t>(n) > r.counts->size()) continue;
                const auto& rc = (*r.counts)[n - 1];
                if (auto it = rc.find(gram); it != rc.end()) max_ref = std::max(max_ref, it->second);
            }
            matched += std::min(count, max_ref);
        }
        double p;
        if (matched == 0) {
            if (smoothing == BleuSmoothing::add_one && n > 1) {
                p = 1.0 / static_cast<double>(total + 1);
            } else {
                return 0.0;
            }
        } else {
            p = static_cast<double>(matched) / static_cast<double>(total);
        }
        log_sum += std::log(p);
    }
    const double c = static_cast<double>(cand_len);
    const double r = static_cast<double>(best_len);
    const double bp = c < r ? std::exp(1.0 - r / c) : 1.0;
    return bp * std::exp(log_sum / order);
}

} // namespace

double bleu(std::span<const std::string> candidate, std::span<const std::vector<std::string>> references, int max_n,
            BleuSmoothing smoothing) {
    if (candidate.empty()) throw InvalidInput("bleu: empty candidate");
    if (max_n < 1) throw InvalidInput("bleu: max_n must be >= 1");
    std::vector<std::vector<NgramCounts>> ref_counts;
    ref_counts.reserve(references.size());
    std::vector<RefView> views;
    bool any = false;
    for (const auto& r : references) {
        ref_counts.push_back(count_ngrams(r, max_n));
        any = any || !r.empty();
    }
    if (!any) throw InvalidInput("bleu: no non-empty reference");
    for (std::size_t i = 0; i < references.size(); ++i) views.push_back({&ref_counts[i], references[i].size()});
    return bleu_from_counts(count_ngrams(candidate, max_n), candidate.size(), views, max_n, smoothing);
}

SelfBleuResult self_bleu(std::span<const std::string> texts, int max_n, BleuSmoothing smoothing, std::size_t max_texts,
                         std::uint64_t seed) {
    if (texts.size() < 2) throw InvalidInput("self_bleu needs at least 2 texts");
    if (max_n < 1) throw InvalidInput("self_bleu: max_n must be >= 1");
    std::vector<std::size_t> chosen;
    if (max_texts >= 2 && texts.size() > max_texts) {
        Rng rng(seed);
        chosen = sample_without_replacement(texts.size(), max_texts, rng);
        std::sort(chosen.begin(), chosen.end());
    } else {
        chosen.resize(texts.size());
        for (std::size_t i = 0; i < texts.size(); ++i) chosen[i] = i;
    }

    const std::size_t m = chosen.size();
    std::vector<std::vector<std::string>> toks(m);
    std::vector<std::vector<NgramCounts>> counts(m);
    for (std::size_t i = 0; i < m; ++i) {
        toks[i] = text::tokenize(texts[chosen[i]]);
        counts[i] = count_ngrams(toks[i], max_n);
    }
    std::vector<RefView> refs;
    refs.reserve(m);
    double sum = 0.0;
    std::size_t scored = 0;
    for (std::size_t i = 0; i < m; ++i) {
        if (toks[i].empty()) continue;
        refs.clear();
        for (std::size_t j = 0; j < m; ++j)
            if (j != i) refs.push_back({&counts[j], toks[j].size()});
        sum += bleu_from_counts(counts[i], toks[i].size(), refs, max_n, smoothing);
        ++scored;
    }
    if (scored == 0) throw InvalidInput("self_bleu: no text has any token");
    return {sum / static_cast<double>(scored), m};
}

double word_entropy(std::span<const std::string> texts) {
    std::unordered_map<std::string, std::size_t> freq;
    std::size_t total = 0;
    for (const auto& t : texts) {
        for (auto& tok : text::tokenize(t)) {
            ++freq[tok];
            ++total;
        }
    }
    if (total == 0) throw InvalidInput("word_entropy: no tokens");
    // Sum in a fixed order so the result does not depend on hash layout.
    std::vector<std::size_t> counts;
    counts.reserve(freq.size());
    for (const auto& [w, c] : freq) counts.push_back(c);
    std::sort(counts.begin(), counts.end());
    double h = 0.0;
    for (std::size_t c : counts) {
        const double p = static_cast<double>(c) / static_cast<double>(total);
        h -= p * std::log2(p);
    }
    return h;
}

TtrResult type_token_ratio(std::span<const std::string> texts, std::size_t prefix_chars) {
    TtrResult res;
    double sum = 0.0;
    std::size_t used = 0;
    for (const auto& t : texts) {
        const auto toks = text::tokenize(text::prefix_chars(t, prefix_chars));
        if (toks.empty()) {
            ++res.excluded;
            continue;
        }
        std::unordered_set<std::string> types(toks.begin(), toks.end());
        sum += static_cast<double>(types.size()) / static_cast<double>(toks.size());
        ++used;
    }
    if (used == 0) throw InvalidInput("type_token_ratio: no text has a token in its prefix");
    res.value = sum / static_cast<double>(used);
    return res;
}

double avg_text_length(std::span<const std::string> texts) {
    if (texts.empty()) throw InvalidInput("avg_text_length: no texts");
    double sum = 0.0;
    for (const auto& t : texts) sum += static_cast<double>(text::char_count(t));
    return sum / static_cast<double>(texts.size());
}

// Projection metrics -----------------------------------------------------------

namespace {

std::vector<double> kth_distances(const Eigen::MatrixXd& pts, int k) {
    spatial::KdTree tree(pts);
    std::vector<double> eps(static_cast<std::size_t>(pts.rows()));
    for (std::size_t i = 0; i < eps.size(); ++i) {
        const auto nb = tree.knn(tree.row(i), static_cast<std::size_t>(k), i);
        eps[i] = std::sqrt(nb.back().dist2);
    }
    return eps;
}

} // namespace

double kl_entropy(const Projection2D& p, int k, std::uint64_t jitter_seed) {
    const Eigen::Index n = p.rows();
    if (k < 1) throw InvalidInput("kl_entropy: k must be >= 1");
    if (n < k + 1) throw InvalidInput("kl_entropy needs n >= k+1");
    if (!p.allFinite()) throw InvalidInput("kl_entropy: non-finite coordinates");

    Eigen::MatrixXd pts = p;
    auto eps = kth_distances(pts, k);
    if (std::any_of(eps.begin(), eps.end(), [](double e) { return e == 0.0; })) {
        const double scale = 1e-9 * std::max(1.0, pts.cwiseAbs().maxCoeff());
        Rng rng(jitter_seed);
        std::uniform_real_distribution<double> u(-scale, scale);
        for (Eigen::Index i = 0; i < pts.rows(); ++i)
            for (Eigen::Index j = 0; j < pts.cols(); ++j) pts(i, j) += u(rng);
        eps = kth_distances(pts, k);
        if (std::any_of(eps.begin(), eps.end(), [](double e) { return e == 0.0; }))
            throw DegenerateInput("kl_entropy: zero k-th neighbor distance persists after jitter");
    }
    double log_sum = 0.0;
    for (double e : eps) log_sum += std::log(e);
    const double nd = static_cast<double>(n);
    return boost::math::digamma(nd) - boost::math::digamma(static_cast<double>(k)) + std::log(std::numbers::pi) +
           2.0 * log_sum / nd;
}

GaussianityResult gaussianity_aic(const Projection2D& p) {
    const Eigen::Index n = p.rows();
    if (n < 4) throw InvalidInput("gaussianity_aic needs n >= 4");
    if (!p.allFinite()) throw InvalidInput("gaussianity_aic: non-finite coordinates");
    GaussianityResult r;
    r.mean = p.colwise().mean().transpose();
    const Eigen::MatrixXd centered = p.rowwise() - r.mean.transpose();
    r.covariance = (centered.transpose() * centered) / static_cast<double>(n);
    const double det = r.covariance.determinant();
    const double tr = r.covariance.trace();
    if (!(tr > 0.0) || !(det > 1e-12 * tr * tr))
        throw DegenerateInput("gaussianity_aic: singular covariance");
    const double nd = static_cast<double>(n);
    // Maximized log-likelihood of a d=2 Gaussian with ML parameters.
    r.log_likelihood = -0.5 * nd * (2.0 * std::log(2.0 * std::numbers::pi) + std::log(det) + 2.0);
    constexpr double parameters = 5.0;
    r.aic = 2.0 * parameters - 2.0 * r.log_likelihood;
    r.aic_per_point = r.aic / nd;
    return r;
}

Projection2D pca_2d(const Eigen::MatrixXd& e) {
    const Eigen::Index n = e.rows(), d = e.cols();
    if (n < 3 || d < 2) throw InvalidInput("pca_2d needs n >= 3 and d >= 2");
    if (!e.allFinite()) throw InvalidInput("pca_2d: non-finite entries");
    const Eigen::RowVectorXd mean = e.colwise().mean();
    const Eigen::MatrixXd x = e.rowwise() - mean;

    Eigen::MatrixXd loadings(d, 2);
    Eigen::Vector2d top;
    if (d <= n) {
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(x.transpose() * x);
        top << es.eigenvalues()(d - 1), es.eigenvalues()(d - 2);
        loadings.col(0) = es.eigenvectors().col(d - 1);
        loadings.col(1) = es.eigenvectors().col(d - 2);
    } else {
        // Gram trick: eigenvectors of X X^T map to principal axes via X^T.
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(x * x.transpose());
        top << es.eigenvalues()(n - 1), es.eigenvalues()(n - 2);
        for (int c = 0; c < 2; ++c) {
            Eigen::VectorXd v = x.transpose() * es.eigenvectors().col(n - 1 - c);
            const double norm = v.norm();
            loadings.col(c) = norm > 0.0 ? Eigen::VectorXd(v / norm) : v;
        }
    }
    if (!(top(0) > 0.0) || top(1) <= 1e-12 * top(0)) throw DegenerateInput("pca_2d: data has rank < 2");

    for (int c = 0; c < 2; ++c) {
        Eigen::Index arg = 0;
        for (Eigen::Index i = 1; i < d; ++i)
            if (std::abs(loadings(i, c)) > std::abs(loadings(arg, c))) arg = i;
        if (loadings(arg, c) < 0.0) loadings.col(c) *= -1.0;
    }
    return x * loadings;
}

// Scores ------------------------------------------------------------------------

ScoreKey parse_score_key(const std::string& s) {
    if (s == "quality") return ScoreKey::quality;
    if (s == "lean") return ScoreKey::lean;
    if (s == "positivity") return ScoreKey::positivity;
    throw InvalidInput("unknown score key '" + s + "'");
}

std::string to_string(ScoreKey k) {
    switch (k) {
    case ScoreKey::quality: return "quality";
    case ScoreKey::lean: return "lean";
    case ScoreKey::positivity: return "positivity";
    }
    return "?";
}

namespace {

std::optional<double> score_of(const TextRecord& r, ScoreKey key) {
    switch (key) {
    case ScoreKey::quality:
        if (r.annotations.quality) return static_cast<double>(*r.annotations.quality);
        return std::nullopt;
    case ScoreKey::lean:
        if (r.annotations.lean) return static_cast<double>(*r.annotations.lean);
        return std::nullopt;
    case ScoreKey::positivity: return r.annotations.positivity;
    }
    return std::nullopt;
}

} // namespace

ScoreAggregate aggregate_scores(std::span<const TextRecord> records, ScoreKey key) {
    ScoreAggregate agg;
    const double lo = key == ScoreKey::positivity ? -1.0 : 0.0;
    const double hi = key == ScoreKey::positivity ? 1.0 : 100.0;
    constexpr int bins = 10;
    for (int b = 0; b <= bins; ++b) agg.bin_edges.push_back(lo + (hi - lo) * b / bins);
    agg.histogram.assign(bins, 0);

    bool any = false;
    double sum = 0.0;
    for (const auto& r : records) {
        const auto s = score_of(r, key);
        if (!s) continue;
        any = true;
        if (key == ScoreKey::lean && *s == -1.0) {
            ++agg.non_political;
            continue;
        }
        sum += *s;
        ++agg.count;
        auto b = static_cast<int>(std::floor((*s - lo) / (hi - lo) * bins));
        agg.histogram[static_cast<std::size_t>(std::clamp(b, 0, bins - 1))] += 1;
    }
    if (!any) throw InvalidInput("aggregate_scores: no record carries '" + to_string(key) + "'");
    if (agg.count > 0) agg.mean = sum / static_cast<double>(agg.count);
    return agg;
}

LeanBins lean_bins(std::span<const double> scores, int bins) {
    if (bins < 1) throw InvalidInput("lean_bins: bins must be >= 1");
    if (scores.empty()) throw InvalidInput("lean_bins: no scores");
    LeanBins out;
    out.proportions.assign(static_cast<std::size_t>(bins), 0.0);
    out.total = scores.size();
    std::size_t neutral = 0, nonpol = 0;
    const double width = 100.0 / bins;
    for (double s : scores) {
        if (s == -1.0) {
            ++nonpol;
            continue;
        }
        if (!(s >= 0.0 && s <= 100.0)) throw InvalidInput("lean_bins: score out of range: " + std::to_string(s));
        ++out.political;
        if (s == 50.0) ++neutral;
        const int b = std::min(static_cast<int>(std::floor(s / width)), bins - 1);
        out.proportions[static_cast<std::size_t>(b)] += 1.0;
    }
    if (out.political > 0) {
        for (double& p : out.proportions) p /= static_cast<double>(out.political);
        out.neutral_fraction = static_cast<double>(neutral) / static_cast<double>(out.political);
    }
    out.non_political_fraction = static_cast<double>(nonpol) / static_cast<double>(out.total);
    return out;
}

} // namespace clab::metrics
