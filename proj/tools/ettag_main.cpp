// ettag: command-line front end for the entity tagging toolkit.

#include <CLI11.hpp>
#include <cstdlib>
#include <iostream>
#include <optional>

#include "ettag/commands.hpp"
#include "ettag/error.hpp"

namespace {

using ettag::Json;

int report_error(std::string_view kind, std::string_view message, int code) {
  Json j = {{"error", kind}, {"message", message}, {"exit_code", code}};
  std::cerr << j.dump() << '\n';
  return code;
}

std::size_t default_threads() {
  if (const char* env = std::getenv("ETTAG_THREADS")) {
    try {
      const long v = std::stol(env);
      if (v > 0) return static_cast<std::size_t>(v);
    } catch (const std::exception&) {
    }
  }
  return 1;
}

// Flags bound to optionals so that only values given on the command line
// override the config file.
struct TrainFlags {
  std::optional<double> lr;
  std::optional<std::size_t> epochs;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> order;
  std::optional<std::size_t> batch_size;
  std::optional<std::string> optimizer;
  std::optional<std::size_t> permutations;
  std::optional<std::size_t> dim;
  std::optional<std::size_t> context;

  void add(CLI::App* app, bool with_order) {
    app->add_option("--lr", lr, "Learning rate");
    app->add_option("--epochs", epochs, "Training epochs");
    app->add_option("--seed", seed, "Random seed");
    if (with_order) {
      app->add_option("--order", order, "Target order: shuffle, mention_order or lexicographic");
    }
    app->add_option("--batch-size", batch_size, "Examples per update");
    app->add_option("--optimizer", optimizer, "adam or sgd");
    app->add_option("--permutations", permutations, "Sampled orders per example per epoch");
    app->add_option("--dim", dim, "Embedding width");
    app->add_option("--context", context, "Decoder window in tokens");
  }

  Json overrides() const {
    Json j = Json::object();
    if (lr) j["lr"] = *lr;
    if (epochs) j["epochs"] = *epochs;
    if (seed) j["seed"] = *seed;
    if (order) j["order_strategy"] = *order;
    if (batch_size) j["batch_size"] = *batch_size;
    if (optimizer) j["optimizer"] = *optimizer;
    if (permutations) j["permutations_per_example"] = *permutations;
    if (dim) j["dim"] = *dim;
    if (context) j["context"] = *context;
    return j;
  }
};

struct DecodeFlags {
  std::optional<std::size_t> beam;
  std::optional<bool> no_repeat;
  std::optional<std::size_t> max_entities;
  std::optional<std::size_t> max_tokens;
  std::optional<bool> allow_empty;
  std::optional<bool> length_normalize;

  void add(CLI::App* app, bool with_beam) {
    if (with_beam) app->add_option("--beam", beam, "Beam size; 1 means greedy");
    app->add_option("--no-repeat", no_repeat, "Forbid repeated entities (true/false)");
    app->add_option("--max-entities", max_entities, "Entities per output");
    app->add_option("--max-tokens", max_tokens, "Output length budget");
    app->add_option("--allow-empty", allow_empty, "Allow the empty prediction (true/false)");
    app->add_option("--length-normalize", length_normalize, "Rank by score per token (true/false)");
  }

  Json overrides() const {
    Json j = Json::object();
    if (beam) j["beam_size"] = *beam;
    if (no_repeat) j["no_repeat"] = *no_repeat;
    if (max_entities) j["max_entities"] = *max_entities;
    if (max_tokens) j["max_tokens"] = *max_tokens;
    if (allow_empty) j["allow_empty"] = *allow_empty;
    if (length_normalize) j["length_normalize"] = *length_normalize;
    return j;
  }
};

Json config_section(const std::optional<std::string>& config, const char* section) {
  if (!config) return Json::object();
  const Json j = ettag::read_json_file(*config);
  if (!j.is_object()) throw ettag::Error(ettag::ErrorKind::SchemaError, *config + ": not an object");
  for (const auto& [k, v] : j.items()) {
    if (k != "train" && k != "decode" && k != "reference") {
      throw ettag::Error(ettag::ErrorKind::SchemaError, *config + ": unknown section '" + k + "'");
    }
  }
  return j.contains(section) ? j.at(section) : Json::object();
}

ettag::TrainConfig resolve_train(const std::optional<std::string>& config, const TrainFlags& f) {
  auto c = ettag::train_config_from_json(config_section(config, "train"));
  return ettag::train_config_from_json(f.overrides(), c);
}

ettag::DecodeConfig resolve_decode(const std::optional<std::string>& config, const DecodeFlags& f) {
  auto c = ettag::decode_config_from_json(config_section(config, "decode"));
  return ettag::decode_config_from_json(f.overrides(), c);
}

void print(const Json& j) { std::cout << j.dump(2) << '\n'; }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Entity tagging with trie-constrained decoding"};
  app.require_subcommand(1);
  app.set_version_flag("--version", ETTAG_VERSION);

  // build-kb
  ettag::BuildKbOptions kb_opts;
  auto* build_kb = app.add_subcommand("build-kb", "Build and cache the entity name trie");
  build_kb->add_option("--kb", kb_opts.kb, "Entity names, one per line or id<TAB>name")->required();
  build_kb->add_option("--cache-out", kb_opts.cache_out, "Trie cache output path")->required();

  // convert
  ettag::ConvertOptions convert_opts;
  std::optional<std::string> stats_out;
  auto* convert = app.add_subcommand("convert", "Convert an entity linking corpus to ET JSONL");
  convert->add_option("--format", convert_opts.format, "aida-conll, el-jsonl or wiki-abstracts")
      ->required()
      ->check(CLI::IsMember({"aida-conll", "el-jsonl", "wiki-abstracts"}));
  convert->add_option("--in", convert_opts.in, "Input corpus")->required();
  convert->add_option("--out", convert_opts.out, "Output ET JSONL")->required();
  convert->add_option("--kb", convert_opts.kb, "Entity catalog")->required();
  convert->add_flag("--keep-empty", convert_opts.keep_empty, "Keep documents with no gold entity");
  convert->add_option("--stats-out", stats_out, "Write conversion statistics JSON here");

  // train
  ettag::TrainOptions train_opts;
  std::optional<std::string> train_config;
  TrainFlags train_flags;
  auto* train = app.add_subcommand("train", "Train the toy tagger");
  train->add_option("--train", train_opts.train, "Training ET JSONL")->required();
  train->add_option("--kb", train_opts.kb, "Entity catalog")->required();
  train->add_option("--model-out", train_opts.model_out, "Checkpoint output path")->required();
  train->add_option("--config", train_config, "JSON config file");
  train->add_option("--min-count", train_opts.min_count, "Input vocabulary count threshold");
  train_flags.add(train, true);

  // tag
  ettag::TagOptions tag_opts;
  tag_opts.threads = default_threads();
  std::optional<std::string> tag_cache, tag_config;
  DecodeFlags tag_flags;
  auto* tag = app.add_subcommand("tag", "Predict entity sets");
  tag->add_option("--model", tag_opts.model, "Checkpoint")->required();
  tag->add_option("--kb", tag_opts.kb, "Entity catalog")->required();
  tag->add_option("--kb-cache", tag_cache, "Trie cache, created when missing");
  tag->add_option("--in", tag_opts.in, "Input ET JSONL")->required();
  tag->add_option("--out", tag_opts.out, "Predictions JSONL")->required();
  tag->add_option("--threads", tag_opts.threads, "Worker threads (default ETTAG_THREADS or 1)");
  tag->add_option("--config", tag_config, "JSON config file");
  tag_flags.add(tag, true);

  // eval
  ettag::EvalOptions eval_opts;
  std::vector<std::string> eval_pred, eval_gold;
  std::string eval_style = "table2", eval_avg = "micro";
  std::optional<std::string> eval_json;
  auto* eval = app.add_subcommand("eval", "Score predictions against gold sets");
  eval->add_option("--pred", eval_pred, "Predictions JSONL (repeatable)")->required();
  eval->add_option("--gold", eval_gold, "Gold ET JSONL (repeatable)")->required();
  eval->add_option("--name", eval_opts.names, "Dataset name per --pred (repeatable)");
  eval->add_option("--style", eval_style, "table2 or table4")
      ->check(CLI::IsMember({"table2", "table4"}));
  eval->add_option("--averaging", eval_avg, "micro or macro")->check(CLI::IsMember({"micro", "macro"}));
  eval->add_option("--json-out", eval_json, "Machine-readable report path");

  // ablate-beam
  ettag::AblateBeamOptions beam_opts;
  beam_opts.threads = default_threads();
  std::string beams = "1,5,10,20,30";
  std::optional<std::string> beam_config;
  DecodeFlags beam_flags;
  auto* ablate_beam = app.add_subcommand("ablate-beam", "F1 against beam size");
  ablate_beam->add_option("--model", beam_opts.model, "Checkpoint")->required();
  ablate_beam->add_option("--kb", beam_opts.kb, "Entity catalog")->required();
  ablate_beam->add_option("--eval", beam_opts.eval, "Gold ET JSONL")->required();
  ablate_beam->add_option("--beams", beams, "Comma-separated beam sizes");
  ablate_beam->add_option("--out", beam_opts.out, "CSV output")->required();
  ablate_beam->add_option("--threads", beam_opts.threads, "Worker threads");
  ablate_beam->add_option("--config", beam_config, "JSON config file");
  beam_flags.add(ablate_beam, false);

  // ablate-order
  ettag::AblateOrderOptions order_opts;
  order_opts.threads = default_threads();
  std::string strategies = "shuffle,mention_order,lexicographic", seeds = "0,1,2";
  std::optional<std::string> order_config;
  TrainFlags order_train_flags;
  DecodeFlags order_decode_flags;
  auto* ablate_order = app.add_subcommand("ablate-order", "Compare target ordering strategies");
  ablate_order->add_option("--train", order_opts.train, "Training ET JSONL")->required();
  ablate_order->add_option("--eval", order_opts.eval, "Held-out ET JSONL")->required();
  ablate_order->add_option("--kb", order_opts.kb, "Entity catalog")->required();
  ablate_order->add_option("--strategies", strategies, "Comma-separated strategies");
  ablate_order->add_option("--seeds", seeds, "Comma-separated seeds");
  ablate_order->add_option("--out", order_opts.out, "CSV output")->required();
  ablate_order->add_option("--threads", order_opts.threads, "Worker threads");
  ablate_order->add_option("--config", order_config, "JSON config file");
  order_train_flags.add(ablate_order, false);
  order_decode_flags.add(ablate_order, true);

  // bench
  ettag::BenchOptions bench_opts;
  std::optional<std::string> bench_kb, bench_out;
  auto* bench = app.add_subcommand("bench", "Trie build time, allowed_tokens latency, peak memory");
  bench->add_option("--kb", bench_kb, "Entity catalog; synthetic names when omitted");
  bench->add_option("--synthetic-names", bench_opts.synthetic_names, "Synthetic catalog size");
  bench->add_option("--queries", bench_opts.queries, "Random cursors to time");
  bench->add_option("--seed", bench_opts.seed, "Random seed");
  bench->add_option("--out", bench_out, "JSON output path");

  // make-synthetic
  ettag::MakeSyntheticOptions syn_opts;
  auto* make_syn = app.add_subcommand("make-synthetic", "Write the seeded synthetic benchmark");
  make_syn->add_option("--out-dir", syn_opts.out_dir, "Output directory")->required();
  make_syn->add_option("--seed", syn_opts.config.seed, "Random seed");
  make_syn->add_option("--docs", syn_opts.config.docs, "Documents");
  make_syn->add_option("--entities", syn_opts.config.entities, "Catalog size");
  make_syn->add_option("--min-gold", syn_opts.config.min_gold, "Fewest gold entities per document");
  make_syn->add_option("--max-gold", syn_opts.config.max_gold, "Most gold entities per document");
  make_syn->add_option("--eval-fraction", syn_opts.config.eval_fraction, "Held-out fraction");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    return report_error("UsageError", e.what(), 1);
  }

  try {
    if (*build_kb) {
      print(ettag::run_build_kb(kb_opts));
    } else if (*convert) {
      if (stats_out) convert_opts.stats_out = *stats_out;
      print(ettag::run_convert(convert_opts));
    } else if (*train) {
      train_opts.config = resolve_train(train_config, train_flags);
      print(ettag::run_train(train_opts));
    } else if (*tag) {
      if (tag_cache) tag_opts.kb_cache = *tag_cache;
      tag_opts.decode = resolve_decode(tag_config, tag_flags);
      print(ettag::run_tag(tag_opts));
    } else if (*eval) {
      for (const auto& p : eval_pred) eval_opts.pred.emplace_back(p);
      for (const auto& g : eval_gold) eval_opts.gold.emplace_back(g);
      eval_opts.style = ettag::parse_report_style(eval_style);
      eval_opts.averaging = eval_avg == "macro" ? ettag::Averaging::Macro : ettag::Averaging::Micro;
      if (eval_json) eval_opts.json_out = *eval_json;
      const auto r = ettag::run_eval(eval_opts);
      std::cout << r.table;
      if (!eval_json) print(r.report);
    } else if (*ablate_beam) {
      beam_opts.beams = ettag::parse_size_list(beams);
      beam_opts.decode = resolve_decode(beam_config, beam_flags);
      print(ettag::run_ablate_beam(beam_opts));
    } else if (*ablate_order) {
      order_opts.strategies = ettag::parse_strategy_list(strategies);
      order_opts.seeds = ettag::parse_seed_list(seeds);
      order_opts.config = resolve_train(order_config, order_train_flags);
      order_opts.decode = resolve_decode(order_config, order_decode_flags);
      print(ettag::run_ablate_order(order_opts));
    } else if (*bench) {
      if (bench_kb) bench_opts.kb = *bench_kb;
      if (bench_out) bench_opts.out = *bench_out;
      print(ettag::run_bench(bench_opts));
    } else if (*make_syn) {
      print(ettag::run_make_synthetic(syn_opts));
    }
  } catch (const ettag::Error& e) {
    return report_error(ettag::to_string(e.kind()), e.what(),
                        ettag::is_contract_violation(e.kind()) ? 2 : 1);
  } catch (const std::filesystem::filesystem_error& e) {
    return report_error("IoError", e.what(), 1);
  } catch (const std::exception& e) {
    return report_error("InternalError", e.what(), 1);
  }
  return 0;
}
