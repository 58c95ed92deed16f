#pragma once

#include <cstdint>
#include <filesystem>
#include <json.hpp>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ettag/catalog.hpp"
#include "ettag/decoding.hpp"
#include "ettag/ingest.hpp"
#include "ettag/metrics.hpp"
#include "ettag/synthetic.hpp"
#include "ettag/toy_model.hpp"
#include "ettag/trie.hpp"

namespace ettag {

using Json = nlohmann::json;
namespace fs = std::filesystem;

// Config files are JSON objects with optional "train" and "decode"
// sections; unknown keys are rejected so typos do not pass silently.
Json to_json(const TrainConfig& c);
Json to_json(const DecodeConfig& c);
TrainConfig train_config_from_json(const Json& j, TrainConfig base = {});
DecodeConfig decode_config_from_json(const Json& j, DecodeConfig base = {});
Json read_json_file(const fs::path& path);

/// Writes `<output>.run.json` holding the command, its resolved options and
/// the library version.
void write_run_config(const fs::path& output, std::string_view command, const Json& options);

struct LoadedModel {
  Vocabulary input_vocab;
  Vocabulary output_vocab;
  ToyModelParams params;
};

/// Checkpoint plus `<model>.vocab.in.tsv` and `<model>.vocab.out.tsv`.
void save_model(const fs::path& model, const ToyModelParams& params, const Vocabulary& input_vocab,
                const Vocabulary& output_vocab);
LoadedModel load_model(const fs::path& model);

/// Loads `cache` when given and present, otherwise builds the trie (and
/// saves it to `cache` when given). A stale cache throws CacheMismatch.
TokenTrie trie_for(const EntityCatalog& catalog, const Vocabulary& output_vocab,
                   const std::optional<fs::path>& cache);

struct Prediction {
  std::string doc_id;
  std::vector<std::string> entities;  // sorted
  std::size_t dropped = 0;
  double score = 0.0;
};

/// Decodes every record, in parallel when threads > 1. Output is sorted by
/// doc_id whatever the thread count.
std::vector<Prediction> tag_records(std::span<const ETRecord> records, const LoadedModel& model,
                                    const EntityCatalog& catalog, const TokenTrie& trie,
                                    const DecodeConfig& config, std::size_t threads = 1);

void write_predictions(std::span<const Prediction> preds, const fs::path& path);
std::vector<Prediction> read_predictions(const fs::path& path);

/// Scores predictions against gold records matched by doc_id. Every gold
/// document needs a prediction; extra predictions are a SchemaError too.
DatasetReport evaluate(std::span<const Prediction> preds, std::span<const ETRecord> gold);

Json report_to_json(std::span<const NamedReport> reports);

struct BuildKbOptions {
  fs::path kb;
  fs::path cache_out;
};
Json run_build_kb(const BuildKbOptions& o);

struct ConvertOptions {
  std::string format;  // aida-conll, el-jsonl, wiki-abstracts
  fs::path in;
  fs::path out;
  fs::path kb;
  bool keep_empty = false;
  std::optional<fs::path> stats_out;
};
Json run_convert(const ConvertOptions& o);

struct TrainOptions {
  fs::path train;
  fs::path kb;
  fs::path model_out;
  TrainConfig config;
  std::size_t min_count = 1;
};
Json run_train(const TrainOptions& o);

struct TagOptions {
  fs::path model;
  fs::path kb;
  std::optional<fs::path> kb_cache;
  fs::path in;
  fs::path out;
  DecodeConfig decode;
  std::size_t threads = 1;
};
Json run_tag(const TagOptions& o);

struct EvalOptions {
  std::vector<fs::path> pred;
  std::vector<fs::path> gold;
  std::vector<std::string> names;
  ReportStyle style = ReportStyle::Table2;
  Averaging averaging = Averaging::Micro;
  std::optional<fs::path> json_out;
};
struct EvalResult {
  std::string table;
  Json report;
};
EvalResult run_eval(const EvalOptions& o);

struct AblateBeamOptions {
  fs::path model;
  fs::path kb;
  fs::path eval;
  std::vector<std::size_t> beams = {1, 5, 10, 20, 30};
  DecodeConfig decode;
  std::size_t threads = 1;
  fs::path out;
};
/// CSV columns: beam,precision,recall,f1,n_docs.
Json run_ablate_beam(const AblateBeamOptions& o);

struct AblateOrderOptions {
  fs::path train;
  fs::path eval;
  fs::path kb;
  std::vector<OrderStrategy> strategies = {OrderStrategy::Shuffle, OrderStrategy::MentionOrder,
                                           OrderStrategy::Lexicographic};
  std::vector<std::uint64_t> seeds = {0, 1, 2};
  TrainConfig config;
  DecodeConfig decode;
  std::size_t threads = 1;
  fs::path out;
};
/// CSV columns: strategy,seed,precision,recall,f1,final_loss.
Json run_ablate_order(const AblateOrderOptions& o);

struct BenchOptions {
  std::optional<fs::path> kb;
  std::size_t synthetic_names = 470578;
  std::size_t queries = 1000000;
  std::uint64_t seed = 0;
  std::optional<fs::path> out;
};
Json run_bench(const BenchOptions& o);

struct MakeSyntheticOptions {
  SyntheticConfig config;
  fs::path out_dir;
};
/// Writes kb.txt, train.jsonl and eval.jsonl into out_dir.
Json run_make_synthetic(const MakeSyntheticOptions& o);

/// Peak resident set size in bytes from /proc, 0 when unavailable.
std::size_t peak_rss_bytes();

std::vector<std::size_t> parse_size_list(std::string_view csv);
std::vector<std::uint64_t> parse_seed_list(std::string_view csv);
std::vector<OrderStrategy> parse_strategy_list(std::string_view csv);

}  // namespace ettag
