#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include <json.hpp>

#include "collapse_lab/chain.hpp"
#include "collapse_lab/clustering.hpp"
#include "collapse_lab/metrics.hpp"
#include "collapse_lab/records.hpp"
#include "collapse_lab/regression.hpp"
#include "collapse_lab/toy_model.hpp"

namespace clab::io {

// Records ---------------------------------------------------------------------

// {"text": str, "domain": str?, "quality": int?, "lean": int?, "positivity": float?}
// plus the optional "source" and "generation" fields this library writes.
TextRecord record_from_json(const nlohmann::json& j);
nlohmann::json record_to_json(const TextRecord& r);

std::vector<TextRecord> parse_records_jsonl(std::istream& in, const std::string& origin = "<stream>");
std::vector<TextRecord> read_records_jsonl(const std::string& path);
void write_records_jsonl(std::ostream& out, const std::vector<TextRecord>& records);
void write_records_jsonl(const std::string& path, const std::vector<TextRecord>& records);

// Embeddings ------------------------------------------------------------------

// "EMB1" magic, u32 n, u32 d, n*d little-endian float32 row-major.
metrics::EmbeddingMatrix read_emb1(const std::string& path);
void write_emb1(const std::string& path, const Eigen::MatrixXd& values);
// CSV with an "id" column; every other column is a coordinate.
metrics::EmbeddingMatrix read_embedding_csv(const std::string& path);
// Dispatches on the leading magic bytes.
metrics::EmbeddingMatrix read_embeddings(const std::string& path);

// Cluster manifest --------------------------------------------------------------

void write_cluster_manifest(const std::string& path, const std::vector<clustering::ClusterSpec>& clusters);
std::vector<clustering::ClusterSpec> read_cluster_manifest(const std::string& path);

// Regression observations ---------------------------------------------------------

void write_observations_csv(const std::string& path, const std::vector<regression::Observation>& obs);
std::vector<regression::Observation> read_observations_csv(const std::string& path);

// group,dependent,term,estimate,std_error,t,p,p_bonferroni,stars,r_squared,adj_r_squared,n,vif,notice
void write_regression_csv(std::ostream& out, const std::vector<regression::GroupRegression>& results);

// Metrics / chains / toy ----------------------------------------------------------

// metric,params,value,sample_size; "self_bleu@max_n=4" splits into
// metric "self_bleu" and params "max_n=4".
void write_metric_report_csv(std::ostream& out, const metrics::MetricReport& report);

// One JSON object per evaluation (generation x domain).
void write_trace_jsonl(std::ostream& out, const ChainTrace& trace);
// seed,generation,domain,metric,value. Header written when `header` is set.
void write_summary_csv(std::ostream& out, const ChainTrace& trace, bool header = true);

void write_toy_runs_csv(std::ostream& out, const std::vector<toy::ToyTrace>& traces);
void write_toy_aggregate_csv(std::ostream& out, const std::vector<toy::ToyTrace>& traces);

// Files ---------------------------------------------------------------------------

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& content);
void ensure_directory(const std::string& path);

} // namespace clab::io
