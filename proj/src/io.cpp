#include "collapse_lab/io.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "collapse_lab/csv.hpp"
#include "collapse_lab/errors.hpp"

namespace clab::io {

using nlohmann::json;

TextRecord record_from_json(const json& j) {
    if (!j.is_object()) throw InvalidInput("record is not a JSON object");
    auto it = j.find("text");
    if (it == j.end() || !it->is_string()) throw InvalidInput("record lacks a string \"text\" field");
    TextRecord r;
    r.text = it->get<std::string>();
    if (auto d = j.find("domain"); d != j.end() && !d->is_null()) r.domain = d->get<std::string>();
    if (auto q = j.find("quality"); q != j.end() && !q->is_null()) {
        const int v = q->get<int>();
        if (v < 0 || v > 100) throw InvalidInput("quality " + std::to_string(v) + " outside 0..100");
        r.annotations.quality = v;
    }
    if (auto l = j.find("lean"); l != j.end() && !l->is_null()) {
        const int v = l->get<int>();
        if (v != -1 && (v < 0 || v > 100)) throw InvalidInput("lean " + std::to_string(v) + " outside -1, 0..100");
        r.annotations.lean = v;
    }
    if (auto p = j.find("positivity"); p != j.end() && !p->is_null()) {
        const double v = p->get<double>();
        if (!(v >= -1.0 && v <= 1.0)) throw InvalidInput("positivity outside -1..1");
        r.annotations.positivity = v;
    }
    if (auto s = j.find("source"); s != j.end() && !s->is_null()) {
        const auto src = s->get<std::string>();
        if (src == "human") r.source = Source::human;
        else if (src == "synthetic") r.source = Source::synthetic;
        else throw InvalidInput("unknown source '" + src + "'");
    }
    if (auto g = j.find("generation"); g != j.end() && !g->is_null()) r.generation = g->get<int>();
    if (auto e = j.find("embedding_id"); e != j.end() && !e->is_null()) r.embedding_id = e->get<std::size_t>();
    if (r.source == Source::human && r.generation != -1) throw InvalidInput("human record with generation != -1");
    if (r.source == Source::synthetic && r.generation < 0) throw InvalidInput("synthetic record without a generation");
    return r;
}

json record_to_json(const TextRecord& r) {
    json j = {{"text", r.text}};
    if (r.domain) j["domain"] = *r.domain;
    if (r.annotations.quality) j["quality"] = *r.annotations.quality;
    if (r.annotations.lean) j["lean"] = *r.annotations.lean;
    if (r.annotations.positivity) j["positivity"] = *r.annotations.positivity;
    if (r.source == Source::synthetic) {
        j["source"] = "synthetic";
        j["generation"] = r.generation;
    }
    if (r.embedding_id) j["embedding_id"] = *r.embedding_id;
    return j;
}

std::vector<TextRecord> parse_records_jsonl(std::istream& in, const std::string& origin) {
    std::vector<TextRecord> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            out.push_back(record_from_json(json::parse(line)));
        } catch (const json::exception& e) {
            throw InvalidInput(origin + ":" + std::to_string(lineno) + ": " + e.what());
        } catch (const InvalidInput& e) {
            throw InvalidInput(origin + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
    return out;
}

std::vector<TextRecord> read_records_jsonl(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw InvalidInput("cannot open " + path);
    return parse_records_jsonl(in, path);
}

void write_records_jsonl(std::ostream& out, const std::vector<TextRecord>& records) {
    for (const auto& r : records) out << record_to_json(r).dump() << '\n';
}

void write_records_jsonl(const std::string& path, const std::vector<TextRecord>& records) {
    std::ostringstream s;
    write_records_jsonl(s, records);
    write_text_file(path, s.str());
}

namespace {

std::uint32_t read_u32_le(const unsigned char* p) {
    return static_cast<std::uint32_t>(p[0]) | static_cast<std::uint32_t>(p[1]) << 8 |
           static_cast<std::uint32_t>(p[2]) << 16 | static_cast<std::uint32_t>(p[3]) << 24;
}

void put_u32_le(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

} // namespace

metrics::EmbeddingMatrix read_emb1(const std::string& path) {
    const std::string data = read_text_file(path);
    const auto* p = reinterpret_cast<const unsigned char*>(data.data());
    if (data.size() < 12 || data.compare(0, 4, "EMB1") != 0) throw InvalidInput(path + ": not an EMB1 file");
    const std::uint64_t n = read_u32_le(p + 4), d = read_u32_le(p + 8);
    if (n == 0 || d == 0) throw InvalidInput(path + ": empty embedding matrix");
    if (data.size() != 12 + n * d * 4)
        throw InvalidInput(path + ": expected " + std::to_string(12 + n * d * 4) + " bytes, found " + std::to_string(data.size()));
    metrics::EmbeddingMatrix m;
    m.values.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
    const unsigned char* q = p + 12;
    for (std::uint64_t i = 0; i < n; ++i)
        for (std::uint64_t j = 0; j < d; ++j, q += 4) {
            const std::uint32_t bits = read_u32_le(q);
            m.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = std::bit_cast<float>(bits);
        }
    m.validate();
    return m;
}

void write_emb1(const std::string& path, const Eigen::MatrixXd& values) {
    std::string out = "EMB1";
    put_u32_le(out, static_cast<std::uint32_t>(values.rows()));
    put_u32_le(out, static_cast<std::uint32_t>(values.cols()));
    for (Eigen::Index i = 0; i < values.rows(); ++i)
        for (Eigen::Index j = 0; j < values.cols(); ++j) put_u32_le(out, std::bit_cast<std::uint32_t>(static_cast<float>(values(i, j))));
    write_text_file(path, out);
}

metrics::EmbeddingMatrix read_embedding_csv(const std::string& path) {
    const auto t = csv::read_file(path);
    const std::size_t id_col = t.column("id");
    if (t.rows.empty() || t.header.size() < 2) throw InvalidInput(path + ": no embedding rows");
    metrics::EmbeddingMatrix m;
    const auto d = static_cast<Eigen::Index>(t.header.size() - 1);
    m.values.resize(static_cast<Eigen::Index>(t.rows.size()), d);
    for (std::size_t i = 0; i < t.rows.size(); ++i) {
        const auto& row = t.rows[i];
        if (row.size() != t.header.size()) throw InvalidInput(path + ": row " + std::to_string(i + 1) + " has the wrong width");
        Eigen::Index c = 0;
        for (std::size_t j = 0; j < row.size(); ++j) {
            if (j == id_col) continue;
            m.values(static_cast<Eigen::Index>(i), c++) = csv::to_double(row[j], path + " row " + std::to_string(i + 1));
        }
        m.ids.push_back(row[id_col]);
    }
    m.validate();
    return m;
}

metrics::EmbeddingMatrix read_embeddings(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InvalidInput("cannot open " + path);
    char magic[4] = {};
    in.read(magic, 4);
    if (in.gcount() == 4 && std::memcmp(magic, "EMB1", 4) == 0) return read_emb1(path);
    return read_embedding_csv(path);
}

void write_cluster_manifest(const std::string& path, const std::vector<clustering::ClusterSpec>& clusters) {
    std::ostringstream s;
    for (const auto& c : clusters) {
        json params = json::object();
        for (const auto& [k, v] : c.params) params[k] = v;
        s << json{{"cluster_id", c.cluster_id}, {"method", c.method}, {"params", params}, {"record_indices", c.record_indices}}.dump()
          << '\n';
    }
    write_text_file(path, s.str());
}

std::vector<clustering::ClusterSpec> read_cluster_manifest(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw InvalidInput("cannot open " + path);
    std::vector<clustering::ClusterSpec> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            const auto j = json::parse(line);
            clustering::ClusterSpec c;
            c.cluster_id = j.at("cluster_id").get<std::size_t>();
            c.method = j.at("method").get<std::string>();
            const json params = j.value("params", json::object());
            for (const auto& [k, v] : params.items()) c.params[k] = v.get<double>();
            c.record_indices = j.at("record_indices").get<std::vector<std::size_t>>();
            out.push_back(std::move(c));
        } catch (const json::exception& e) {
            throw InvalidInput(path + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
    return out;
}

void write_observations_csv(const std::string& path, const std::vector<regression::Observation>& obs) {
    std::ostringstream s;
    csv::Writer w(s);
    std::vector<std::string> header = {"cluster_id", "domain", "ratio"};
    for (const auto& p : regression::property_names()) header.push_back(p);
    header.push_back("rel_diversity");
    header.push_back("rel_quality");
    w.row(header);
    for (const auto& o : obs) {
        std::vector<std::string> row = {o.cluster_id, o.domain, csv::format_double(o.ratio)};
        for (double v : o.properties) row.push_back(csv::format_double(v));
        row.push_back(csv::format_double(o.rel_diversity));
        row.push_back(csv::format_double(o.rel_quality));
        w.row(row);
    }
    write_text_file(path, s.str());
}

std::vector<regression::Observation> read_observations_csv(const std::string& path) {
    const auto t = csv::read_file(path);
    const auto cid = t.column("cluster_id"), dom = t.column("domain"), rat = t.column("ratio");
    std::vector<std::size_t> props;
    for (const auto& p : regression::property_names()) props.push_back(t.column(p));
    const auto rd = t.column("rel_diversity"), rq = t.column("rel_quality");
    std::vector<regression::Observation> out;
    for (std::size_t i = 0; i < t.rows.size(); ++i) {
        const auto& row = t.rows[i];
        if (row.size() != t.header.size()) throw InvalidInput(path + ": row " + std::to_string(i + 1) + " has the wrong width");
        const std::string ctx = path + " row " + std::to_string(i + 1);
        regression::Observation o;
        o.cluster_id = row[cid];
        o.domain = row[dom];
        o.ratio = csv::to_double(row[rat], ctx);
        for (auto c : props) o.properties.push_back(csv::to_double(row[c], ctx));
        o.rel_diversity = csv::to_double(row[rd], ctx);
        o.rel_quality = csv::to_double(row[rq], ctx);
        out.push_back(std::move(o));
    }
    return out;
}

void write_regression_csv(std::ostream& out, const std::vector<regression::GroupRegression>& results) {
    csv::Writer w(out);
    w.row({"group", "dependent", "term", "estimate", "std_error", "t", "p", "p_bonferroni", "stars", "r_squared",
           "adj_r_squared", "n", "vif", "notice"});
    const auto opt = [](const std::optional<double>& v) { return v ? csv::format_double(*v) : std::string(); };
    for (const auto& g : results) {
        if (!g.result) {
            w.row({g.group, g.dependent, "", "", "", "", "", "", "", "", "", "", "", g.notice});
            continue;
        }
        const auto& r = *g.result;
        std::size_t tests = 0;
        for (const auto& c : r.coefficients)
            if (c.name != "(intercept)") ++tests;
        std::size_t pred = 0;
        for (const auto& c : r.coefficients) {
            const bool is_intercept = c.name == "(intercept)";
            std::optional<double> bonf;
            if (c.p_value && !is_intercept) bonf = std::min(1.0, *c.p_value * static_cast<double>(tests));
            std::string vif_field;
            if (!is_intercept && pred < r.vif.size()) vif_field = csv::format_double(r.vif[pred++]);
            w.row({g.group, g.dependent, c.name, csv::format_double(c.estimate), csv::format_double(c.std_error), opt(c.t),
                   opt(c.p_value), opt(bonf), regression::significance_stars(c.p_value), csv::format_double(r.r_squared),
                   csv::format_double(r.adj_r_squared), std::to_string(r.n), vif_field, g.notice});
        }
    }
}

void write_metric_report_csv(std::ostream& out, const metrics::MetricReport& report) {
    csv::Writer w(out);
    w.row({"metric", "params", "value", "sample_size"});
    for (const auto& [name, value] : report.values) {
        const auto at = name.find('@');
        w.row({name.substr(0, at), at == std::string::npos ? std::string() : name.substr(at + 1), csv::format_double(value),
               std::to_string(report.sample_size)});
    }
}

void write_trace_jsonl(std::ostream& out, const ChainTrace& trace) {
    const auto& cfg = trace.config;
    for (const auto& ev : trace.evaluations) {
        json metrics = json::object();
        for (const auto& [k, v] : ev.report.values) metrics[k] = std::isfinite(v) ? json(v) : json(csv::format_double(v));
        const auto g = static_cast<std::size_t>(ev.generation);
        json j = {{"seed", cfg.seed},
                  {"ratio", cfg.ratio},
                  {"generation", ev.generation},
                  {"domain", ev.domain},
                  {"generator_kinds", trace.kinds.at(g)},
                  {"pool_size", trace.pool_sizes.at(g)},
                  {"synthetic_count", trace.synthetic_counts.at(g)},
                  {"batch_size", ev.batch_size},
                  {"skipped", ev.skipped},
                  {"evaluated", ev.report.sample_size},
                  {"undersized", ev.report.undersized},
                  {"metrics", metrics}};
        out << j.dump() << '\n';
    }
}

void write_summary_csv(std::ostream& out, const ChainTrace& trace, bool header) {
    csv::Writer w(out);
    if (header) w.row({"seed", "generation", "domain", "metric", "value"});
    const std::string seed = std::to_string(trace.config.seed);
    for (const auto& ev : trace.evaluations) {
        if (ev.skipped) continue;
        for (const auto& [k, v] : ev.report.values)
            w.row({seed, std::to_string(ev.generation), ev.domain, k, csv::format_double(v)});
    }
}

void write_toy_runs_csv(std::ostream& out, const std::vector<toy::ToyTrace>& traces) {
    csv::Writer w(out);
    w.row({"run", "step", "r", "support_fraction", "shannon_entropy"});
    for (const auto& t : traces)
        for (const auto& rec : t.records)
            w.row({std::to_string(rec.run), std::to_string(rec.step), csv::format_double(t.config.ratio),
                   csv::format_double(rec.support_fraction), csv::format_double(rec.shannon_entropy)});
}

void write_toy_aggregate_csv(std::ostream& out, const std::vector<toy::ToyTrace>& traces) {
    csv::Writer w(out);
    w.row({"step", "r", "runs", "mean_support_fraction", "mean_shannon_entropy", "se_shannon_entropy"});
    for (const auto& t : traces)
        for (const auto& s : t.summary)
            w.row({std::to_string(s.step), csv::format_double(t.config.ratio), std::to_string(t.config.runs),
                   csv::format_double(s.mean_support_fraction), csv::format_double(s.mean_shannon_entropy),
                   csv::format_double(s.se_shannon_entropy)});
}

std::string read_text_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InvalidInput("cannot open " + path);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

void write_text_file(const std::string& path, const std::string& content) {
    const std::filesystem::path p(path);
    if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw InvalidInput("cannot write " + path);
    out << content;
    if (!out) throw InvalidInput("write failed for " + path);
}

void ensure_directory(const std::string& path) { std::filesystem::create_directories(path); }

} // namespace clab::io
