#include "ettag/commands.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <chrono>
#include <exception>
#include <fstream>
#include <mutex>
#include <random>
#include <sstream>
#include <thread>
#include <unordered_map>

#include "ettag/error.hpp"

#ifndef ETTAG_VERSION
#define ETTAG_VERSION "0.0.0"
#endif

namespace ettag {
namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

fs::path sibling(const fs::path& p, std::string_view suffix) {
  fs::path out = p;
  out += std::string(suffix);
  return out;
}

std::ofstream open_out(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::Io, "cannot write " + path.string());
  return out;
}

std::ifstream open_in(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::Io, "cannot open " + path.string());
  return in;
}

EntityCatalog load_kb(const fs::path& kb) { return load_catalog(kb, guess_catalog_format(kb)); }

void check_known_keys(const Json& j, std::initializer_list<std::string_view> keys,
                      std::string_view section) {
  if (!j.is_object()) {
    throw Error(ErrorKind::SchemaError, "config section '" + std::string(section) + "' must be an object");
  }
  for (const auto& [k, v] : j.items()) {
    if (std::find(keys.begin(), keys.end(), k) == keys.end()) {
      throw Error(ErrorKind::SchemaError,
                  "unknown key '" + k + "' in config section '" + std::string(section) + "'");
    }
  }
}

template <typename T>
void take(const Json& j, const char* key, T& field) {
  if (!j.contains(key)) return;
  try {
    field = j.at(key).get<T>();
  } catch (const Json::exception& e) {
    throw Error(ErrorKind::SchemaError, std::string("config key '") + key + "': " + e.what());
  }
}

Json score_json(const DocScore& s) {
  return {{"precision", s.precision}, {"recall", s.recall}, {"f1", s.f1},
          {"tp", s.tp}, {"fp", s.fp}, {"fn", s.fn}};
}

Json stats_json(const CorpusConversion& c) {
  return {{"documents", c.documents},
          {"records", c.records.size()},
          {"empty_excluded", c.empty_excluded},
          {"mentions", c.totals.mentions},
          {"distinct_keys", c.totals.distinct_keys},
          {"gold", c.totals.gold},
          {"dropped_nil", c.totals.dropped_nil},
          {"dropped_oov", c.totals.dropped_oov},
          {"title_not_in_catalog", c.totals.title_not_in_catalog}};
}

template <typename T>
std::vector<T> parse_list(std::string_view csv, T (*one)(std::string_view)) {
  std::vector<T> out;
  std::size_t start = 0;
  while (start <= csv.size()) {
    auto comma = csv.find(',', start);
    if (comma == std::string_view::npos) comma = csv.size();
    auto item = csv.substr(start, comma - start);
    while (!item.empty() && item.front() == ' ') item.remove_prefix(1);
    while (!item.empty() && item.back() == ' ') item.remove_suffix(1);
    if (item.empty()) throw Error(ErrorKind::InvalidArgument, "empty item in list '" + std::string(csv) + "'");
    out.push_back(one(item));
    start = comma + 1;
  }
  return out;
}

std::uint64_t parse_u64(std::string_view s) {
  std::uint64_t v = 0;
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size()) {
    throw Error(ErrorKind::InvalidArgument, "not a non-negative integer: '" + std::string(s) + "'");
  }
  return v;
}

std::size_t parse_size(std::string_view s) { return static_cast<std::size_t>(parse_u64(s)); }

OrderStrategy parse_strategy(std::string_view s) { return parse_order_strategy(s); }

std::string csv_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  return buf;
}

}  // namespace

Json to_json(const TrainConfig& c) {
  return {{"lr", c.lr},
          {"epochs", c.epochs},
          {"seed", c.seed},
          {"order_strategy", to_string(c.order_strategy)},
          {"batch_size", c.batch_size},
          {"optimizer", to_string(c.optimizer)},
          {"adam_beta1", c.adam_beta1},
          {"adam_beta2", c.adam_beta2},
          {"adam_epsilon", c.adam_epsilon},
          {"permutations_per_example", c.permutations_per_example},
          {"dim", c.dim},
          {"context", c.context},
          {"init_range", c.init_range}};
}

Json to_json(const DecodeConfig& c) {
  return {{"beam_size", c.beam_size},
          {"max_entities", c.max_entities},
          {"max_tokens", c.max_tokens},
          {"no_repeat", c.no_repeat},
          {"allow_empty", c.allow_empty},
          {"length_normalize", c.length_normalize},
          {"renormalize_constrained", c.renormalize_constrained}};
}

TrainConfig train_config_from_json(const Json& j, TrainConfig c) {
  check_known_keys(j,
                   {"lr", "epochs", "seed", "order_strategy", "batch_size", "optimizer", "adam_beta1",
                    "adam_beta2", "adam_epsilon", "permutations_per_example", "dim", "context",
                    "init_range"},
                   "train");
  take(j, "lr", c.lr);
  take(j, "epochs", c.epochs);
  take(j, "seed", c.seed);
  take(j, "batch_size", c.batch_size);
  take(j, "adam_beta1", c.adam_beta1);
  take(j, "adam_beta2", c.adam_beta2);
  take(j, "adam_epsilon", c.adam_epsilon);
  take(j, "permutations_per_example", c.permutations_per_example);
  take(j, "dim", c.dim);
  take(j, "context", c.context);
  take(j, "init_range", c.init_range);
  std::string s;
  if (j.contains("order_strategy")) {
    take(j, "order_strategy", s);
    c.order_strategy = parse_order_strategy(s);
  }
  if (j.contains("optimizer")) {
    take(j, "optimizer", s);
    c.optimizer = parse_optimizer(s);
  }
  c.validate();
  return c;
}

DecodeConfig decode_config_from_json(const Json& j, DecodeConfig c) {
  check_known_keys(j,
                   {"beam_size", "max_entities", "max_tokens", "no_repeat", "allow_empty",
                    "length_normalize", "renormalize_constrained"},
                   "decode");
  take(j, "beam_size", c.beam_size);
  take(j, "max_entities", c.max_entities);
  take(j, "max_tokens", c.max_tokens);
  take(j, "no_repeat", c.no_repeat);
  take(j, "allow_empty", c.allow_empty);
  take(j, "length_normalize", c.length_normalize);
  take(j, "renormalize_constrained", c.renormalize_constrained);
  c.validate();
  return c;
}

Json read_json_file(const fs::path& path) {
  auto in = open_in(path);
  try {
    return Json::parse(in, nullptr, true, true);
  } catch (const Json::parse_error& e) {
    throw Error(ErrorKind::SchemaError, path.string() + ": " + e.what());
  }
}

void write_run_config(const fs::path& output, std::string_view command, const Json& options) {
  Json j = {{"command", command}, {"version", ETTAG_VERSION}, {"options", options}};
  auto out = open_out(sibling(output, ".run.json"));
  out << j.dump(2) << '\n';
}

void save_model(const fs::path& model, const ToyModelParams& params, const Vocabulary& input_vocab,
                const Vocabulary& output_vocab) {
  if (model.has_parent_path()) fs::create_directories(model.parent_path());
  save_checkpoint(model, params, model_vocab_hash(input_vocab, output_vocab));
  auto vin = open_out(sibling(model, ".vocab.in.tsv"));
  input_vocab.dump(vin);
  auto vout = open_out(sibling(model, ".vocab.out.tsv"));
  output_vocab.dump(vout);
}

LoadedModel load_model(const fs::path& model) {
  Checkpoint ck = load_checkpoint(model);
  auto vin = open_in(sibling(model, ".vocab.in.tsv"));
  auto vout = open_in(sibling(model, ".vocab.out.tsv"));
  LoadedModel m{Vocabulary::load(vin), Vocabulary::load(vout), std::move(ck.params)};
  if (model_vocab_hash(m.input_vocab, m.output_vocab) != ck.vocab_hash ||
      m.input_vocab.size() != m.params.input_vocab() ||
      m.output_vocab.size() != m.params.output_vocab()) {
    throw Error(ErrorKind::CacheMismatch,
                "vocabulary files do not match checkpoint " + model.string());
  }
  return m;
}

TokenTrie trie_for(const EntityCatalog& catalog, const Vocabulary& output_vocab,
                   const std::optional<fs::path>& cache) {
  if (cache && fs::exists(*cache)) {
    return TokenTrie::load(*cache, trie_cache_key(catalog, output_vocab), catalog.size(),
                           output_vocab.size());
  }
  TokenTrie trie = TokenTrie::build(catalog, output_vocab);
  if (cache) trie.save(*cache);
  return trie;
}

std::vector<Prediction> tag_records(std::span<const ETRecord> records, const LoadedModel& model,
                                    const EntityCatalog& catalog, const TokenTrie& trie,
                                    const DecodeConfig& config, std::size_t threads) {
  config.validate();
  const ToyScorer scorer(model.params);
  std::vector<Prediction> out(records.size());
  auto run_one = [&](std::size_t i) {
    const ETRecord& r = records[i];
    const TokenSeq input = tokenize(r.text, model.input_vocab, TokenizeMode::Input);
    const ScoredSequence best = decode(scorer, trie, input, config);
    const ParsedOutput parsed = parse_output(best.tokens, trie);
    Prediction& p = out[i];
    p.doc_id = r.doc_id;
    p.dropped = parsed.dropped;
    p.score = best.score;
    for (EntityId e : parsed.entities) p.entities.push_back(catalog.name(e).str());
    std::sort(p.entities.begin(), p.entities.end());
  };

  threads = std::max<std::size_t>(1, std::min(threads, records.size()));
  if (threads == 1) {
    for (std::size_t i = 0; i < records.size(); ++i) run_one(i);
  } else {
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mu;
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < threads; ++t) {
      pool.emplace_back([&] {
        for (std::size_t i; (i = next.fetch_add(1)) < records.size();) {
          try {
            run_one(i);
          } catch (...) {
            std::lock_guard lock(failure_mu);
            if (!failure) failure = std::current_exception();
            next = records.size();
          }
        }
      });
    }
    for (auto& th : pool) th.join();
    if (failure) std::rethrow_exception(failure);
  }
  std::stable_sort(out.begin(), out.end(),
                   [](const Prediction& a, const Prediction& b) { return a.doc_id < b.doc_id; });
  return out;
}

void write_predictions(std::span<const Prediction> preds, const fs::path& path) {
  auto out = open_out(path);
  for (const auto& p : preds) {
    Json j = {{"doc_id", p.doc_id}, {"entities", p.entities}, {"dropped", p.dropped}, {"score", p.score}};
    out << j.dump() << '\n';
  }
  if (!out) throw Error(ErrorKind::Io, "failed writing " + path.string());
}

std::vector<Prediction> read_predictions(const fs::path& path) {
  auto in = open_in(path);
  std::vector<Prediction> preds;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = path.string() + ":" + std::to_string(line_no);
    Json j;
    try {
      j = Json::parse(line);
    } catch (const Json::parse_error& e) {
      throw Error(ErrorKind::SchemaError, where + ": invalid JSON: " + e.what());
    }
    if (!j.is_object() || !j.contains("doc_id") || !j["doc_id"].is_string() ||
        !j.contains("entities") || !j["entities"].is_array()) {
      throw Error(ErrorKind::SchemaError, where + ": prediction needs 'doc_id' and 'entities'");
    }
    Prediction p;
    p.doc_id = j["doc_id"].get<std::string>();
    for (const auto& e : j["entities"]) {
      if (!e.is_string()) throw Error(ErrorKind::SchemaError, where + ": 'entities' must hold strings");
      p.entities.push_back(e.get<std::string>());
    }
    if (j.contains("dropped") && j["dropped"].is_number_unsigned()) p.dropped = j["dropped"].get<std::size_t>();
    if (j.contains("score") && j["score"].is_number()) p.score = j["score"].get<double>();
    preds.push_back(std::move(p));
  }
  return preds;
}

DatasetReport evaluate(std::span<const Prediction> preds, std::span<const ETRecord> gold) {
  std::unordered_map<std::string, const Prediction*> by_doc;
  for (const auto& p : preds) {
    if (!by_doc.emplace(p.doc_id, &p).second) {
      throw Error(ErrorKind::SchemaError, "duplicate prediction for document " + p.doc_id);
    }
  }
  if (by_doc.size() != gold.size()) {
    throw Error(ErrorKind::SchemaError, std::to_string(preds.size()) + " predictions for " +
                                            std::to_string(gold.size()) + " gold documents");
  }
  std::unordered_map<std::string, EntityId> intern;
  auto ids = [&](std::span<const std::string> names) {
    std::vector<EntityId> out;
    for (const auto& n : names) {
      std::string key;
      try {
        key = canonicalize(n).str();
      } catch (const Error&) {
        key = n;
      }
      out.push_back(intern.emplace(key, static_cast<EntityId>(intern.size())).first->second);
    }
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
  };
  std::vector<DocScore> scores;
  scores.reserve(gold.size());
  for (const auto& g : gold) {
    auto it = by_doc.find(g.doc_id);
    if (it == by_doc.end()) throw Error(ErrorKind::SchemaError, "no prediction for document " + g.doc_id);
    scores.push_back(prf1(ids(it->second->entities), ids(g.gold)));
  }
  return aggregate(scores);
}

Json report_to_json(std::span<const NamedReport> reports) {
  Json j = Json::object();
  for (const auto& r : reports) {
    j[r.name] = {{"micro", score_json(r.report.micro)},
                 {"macro", score_json(r.report.macro)},
                 {"n_docs", r.report.n_docs}};
  }
  return j;
}

Json run_build_kb(const BuildKbOptions& o) {
  const auto start = Clock::now();
  const EntityCatalog catalog = load_kb(o.kb);
  const Vocabulary out_vocab = build_output_vocabulary(catalog);
  const TokenTrie trie = TokenTrie::build(catalog, out_vocab);
  const double build_seconds = seconds_since(start);
  trie.save(o.cache_out);
  auto vout = open_out(sibling(o.cache_out, ".vocab.tsv"));
  out_vocab.dump(vout);
  const TrieStats s = trie.stats();
  Json result = {{"entities", s.entity_count},
                 {"nodes", s.node_count},
                 {"max_depth", s.max_depth},
                 {"output_vocab", out_vocab.size()},
                 {"build_seconds", build_seconds}};
  write_run_config(o.cache_out, "build-kb",
                   {{"kb", o.kb.string()}, {"cache_out", o.cache_out.string()}});
  return result;
}

Json run_convert(const ConvertOptions& o) {
  const EntityCatalog catalog = load_kb(o.kb);
  CorpusConversion c;
  if (o.format == "aida-conll") {
    const auto docs = parse_aida_conll(o.in);
    c = convert_el_corpus(docs, catalog, o.keep_empty);
  } else if (o.format == "el-jsonl") {
    const auto docs = parse_normalized_jsonl(o.in);
    c = convert_el_corpus(docs, catalog, o.keep_empty);
  } else if (o.format == "wiki-abstracts") {
    const auto pages = parse_wiki_abstracts(o.in);
    c = convert_wiki_corpus(pages, catalog, o.keep_empty);
  } else {
    throw Error(ErrorKind::InvalidArgument, "unknown format: " + o.format);
  }
  write_et_jsonl(c.records, o.out);
  Json stats = stats_json(c);
  if (o.stats_out) {
    auto out = open_out(*o.stats_out);
    out << stats.dump(2) << '\n';
  }
  write_run_config(o.out, "convert",
                   {{"format", o.format},
                    {"in", o.in.string()},
                    {"out", o.out.string()},
                    {"kb", o.kb.string()},
                    {"keep_empty", o.keep_empty}});
  return stats;
}

Json run_train(const TrainOptions& o) {
  const EntityCatalog catalog = load_kb(o.kb);
  const auto records = read_et_jsonl(o.train);
  std::vector<std::string> texts;
  for (const auto& r : records) texts.push_back(r.text);
  const Vocabularies v = build_vocabularies(catalog, texts, o.min_count);
  const auto examples = make_examples(records, catalog, v.input);

  const auto start = Clock::now();
  const TrainResult result = train(examples, o.config, catalog, v.input, v.output);
  const double seconds = seconds_since(start);
  save_model(o.model_out, result.params, v.input, v.output);

  auto csv = open_out(sibling(o.model_out, ".loss.csv"));
  csv << "epoch,loss\n";
  for (std::size_t e = 0; e < result.epoch_loss.size(); ++e) {
    csv << (e + 1) << ',' << csv_double(result.epoch_loss[e]) << '\n';
  }
  write_run_config(o.model_out, "train",
                   {{"train", o.train.string()},
                    {"kb", o.kb.string()},
                    {"model_out", o.model_out.string()},
                    {"min_count", o.min_count},
                    {"train_config", to_json(o.config)}});
  return {{"examples", examples.size()},
          {"input_vocab", v.input.size()},
          {"output_vocab", v.output.size()},
          {"parameters", result.params.parameter_count()},
          {"final_loss", result.epoch_loss.back()},
          {"seconds", seconds}};
}

Json run_tag(const TagOptions& o) {
  const EntityCatalog catalog = load_kb(o.kb);
  const LoadedModel model = load_model(o.model);
  const TokenTrie trie = trie_for(catalog, model.output_vocab, o.kb_cache);
  const auto records = read_et_jsonl(o.in);
  const auto start = Clock::now();
  const auto preds = tag_records(records, model, catalog, trie, o.decode, o.threads);
  const double seconds = seconds_since(start);
  write_predictions(preds, o.out);
  std::size_t dropped = 0;
  for (const auto& p : preds) dropped += p.dropped;
  write_run_config(o.out, "tag",
                   {{"model", o.model.string()},
                    {"kb", o.kb.string()},
                    {"kb_cache", o.kb_cache ? Json(o.kb_cache->string()) : Json(nullptr)},
                    {"in", o.in.string()},
                    {"out", o.out.string()},
                    {"threads", o.threads},
                    {"decode", to_json(o.decode)}});
  return {{"documents", preds.size()}, {"dropped", dropped}, {"seconds", seconds}};
}

EvalResult run_eval(const EvalOptions& o) {
  if (o.pred.empty() || o.pred.size() != o.gold.size()) {
    throw Error(ErrorKind::InvalidArgument, "need one --gold per --pred");
  }
  if (!o.names.empty() && o.names.size() != o.pred.size()) {
    throw Error(ErrorKind::InvalidArgument, "need one --name per --pred");
  }
  std::vector<NamedReport> reports;
  for (std::size_t i = 0; i < o.pred.size(); ++i) {
    const auto preds = read_predictions(o.pred[i]);
    const auto gold = read_et_jsonl(o.gold[i]);
    const std::string name = o.names.empty() ? o.gold[i].stem().string() : o.names[i];
    reports.push_back({name, evaluate(preds, gold)});
  }
  EvalResult r;
  r.table = format_report(reports, o.style, o.averaging);
  r.report = report_to_json(reports);
  if (o.json_out) {
    auto out = open_out(*o.json_out);
    out << r.report.dump(2) << '\n';
    std::vector<std::string> pred, gold;
    for (const auto& p : o.pred) pred.push_back(p.string());
    for (const auto& g : o.gold) gold.push_back(g.string());
    write_run_config(*o.json_out, "eval",
                     {{"pred", pred},
                      {"gold", gold},
                      {"names", o.names},
                      {"style", o.style == ReportStyle::Table2 ? "table2" : "table4"},
                      {"averaging", o.averaging == Averaging::Micro ? "micro" : "macro"}});
  }
  return r;
}

Json run_ablate_beam(const AblateBeamOptions& o) {
  const EntityCatalog catalog = load_kb(o.kb);
  const LoadedModel model = load_model(o.model);
  const TokenTrie trie = TokenTrie::build(catalog, model.output_vocab);
  const auto gold = read_et_jsonl(o.eval);
  auto csv = open_out(o.out);
  csv << "beam,precision,recall,f1,n_docs\n";
  Json rows = Json::array();
  for (std::size_t beam : o.beams) {
    DecodeConfig config = o.decode;
    config.beam_size = beam;
    const auto preds = tag_records(gold, model, catalog, trie, config, o.threads);
    const DatasetReport r = evaluate(preds, gold);
    csv << beam << ',' << csv_double(r.micro.precision) << ',' << csv_double(r.micro.recall) << ','
        << csv_double(r.micro.f1) << ',' << r.n_docs << '\n';
    rows.push_back({{"beam", beam}, {"f1", r.micro.f1}});
  }
  if (!csv) throw Error(ErrorKind::Io, "failed writing " + o.out.string());
  write_run_config(o.out, "ablate-beam",
                   {{"model", o.model.string()},
                    {"kb", o.kb.string()},
                    {"eval", o.eval.string()},
                    {"beams", o.beams},
                    {"threads", o.threads},
                    {"decode", to_json(o.decode)}});
  return rows;
}

Json run_ablate_order(const AblateOrderOptions& o) {
  const EntityCatalog catalog = load_kb(o.kb);
  const auto train_records = read_et_jsonl(o.train);
  const auto eval_records = read_et_jsonl(o.eval);
  std::vector<std::string> texts;
  for (const auto& r : train_records) texts.push_back(r.text);
  const Vocabularies v = build_vocabularies(catalog, texts, 1);
  const auto examples = make_examples(train_records, catalog, v.input);
  const TokenTrie trie = TokenTrie::build(catalog, v.output);

  auto csv = open_out(o.out);
  csv << "strategy,seed,precision,recall,f1,final_loss\n";
  Json rows = Json::array();
  for (OrderStrategy s : o.strategies) {
    for (std::uint64_t seed : o.seeds) {
      TrainConfig config = o.config;
      config.order_strategy = s;
      config.seed = seed;
      TrainResult result = train(examples, config, catalog, v.input, v.output);
      const LoadedModel model{v.input, v.output, std::move(result.params)};
      const auto preds = tag_records(eval_records, model, catalog, trie, o.decode, o.threads);
      const DatasetReport r = evaluate(preds, eval_records);
      csv << to_string(s) << ',' << seed << ',' << csv_double(r.micro.precision) << ','
          << csv_double(r.micro.recall) << ',' << csv_double(r.micro.f1) << ','
          << csv_double(result.epoch_loss.back()) << '\n';
      rows.push_back({{"strategy", to_string(s)}, {"seed", seed}, {"f1", r.micro.f1}});
    }
  }
  if (!csv) throw Error(ErrorKind::Io, "failed writing " + o.out.string());
  std::vector<std::string> strategies;
  for (auto s : o.strategies) strategies.push_back(to_string(s));
  write_run_config(o.out, "ablate-order",
                   {{"train", o.train.string()},
                    {"eval", o.eval.string()},
                    {"kb", o.kb.string()},
                    {"strategies", strategies},
                    {"seeds", o.seeds},
                    {"threads", o.threads},
                    {"train_config", to_json(o.config)},
                    {"decode", to_json(o.decode)}});
  return rows;
}

Json run_bench(const BenchOptions& o) {
  auto start = Clock::now();
  std::vector<std::string> names;
  if (o.kb) {
    // The catalog is rebuilt below so both sources go through the same timed path.
    const EntityCatalog c = load_kb(*o.kb);
    for (const auto& n : c.names()) names.push_back(n.str());
  } else {
    names = synthetic_names(o.synthetic_names, o.seed);
  }
  const double source_seconds = seconds_since(start);

  start = Clock::now();
  const EntityCatalog catalog = EntityCatalog::from_names(names);
  const Vocabulary out_vocab = build_output_vocabulary(catalog);
  const double catalog_seconds = seconds_since(start);
  start = Clock::now();
  const TokenTrie trie = TokenTrie::build(catalog, out_vocab);
  const double trie_seconds = seconds_since(start);
  names.clear();
  names.shrink_to_fit();

  std::mt19937_64 rng(o.seed ^ 0x5bd1e995u);
  DecodeConfig config;
  std::vector<TokenId> allowed;
  std::vector<double> ns;
  ns.reserve(o.queries);
  std::size_t total_allowed = 0;
  for (std::size_t q = 0; q < o.queries; ++q) {
    const auto node = static_cast<NodeIndex>(uniform_index(rng, trie.node_count()));
    EmittedSet emitted;
    const std::size_t k = uniform_index(rng, 4);
    for (std::size_t i = 0; i < k; ++i) {
      emitted.add(static_cast<EntityId>(uniform_index(rng, catalog.size())));
    }
    const TrieCursor cursor = TrieCursor::at(node);
    const auto t0 = Clock::now();
    allowed_tokens(trie, cursor, emitted, config, allowed);
    const auto t1 = Clock::now();
    total_allowed += allowed.size();
    ns.push_back(std::chrono::duration<double, std::nano>(t1 - t0).count());
  }
  auto quantile = [&](double q) {
    if (ns.empty()) return 0.0;
    const auto at = static_cast<std::size_t>(q * static_cast<double>(ns.size() - 1));
    std::nth_element(ns.begin(), ns.begin() + static_cast<std::ptrdiff_t>(at), ns.end());
    return ns[at];
  };
  const TrieStats s = trie.stats();
  Json result = {{"entities", s.entity_count},
                 {"nodes", s.node_count},
                 {"max_depth", s.max_depth},
                 {"output_vocab", out_vocab.size()},
                 {"source_seconds", source_seconds},
                 {"catalog_seconds", catalog_seconds},
                 {"trie_seconds", trie_seconds},
                 {"build_seconds", catalog_seconds + trie_seconds},
                 {"queries", o.queries},
                 {"allowed_median_ns", quantile(0.5)},
                 {"allowed_p90_ns", quantile(0.9)},
                 {"allowed_p99_ns", quantile(0.99)},
                 {"allowed_mean_size",
                  o.queries ? static_cast<double>(total_allowed) / static_cast<double>(o.queries) : 0.0},
                 {"peak_rss_bytes", peak_rss_bytes()}};
  if (o.out) {
    auto out = open_out(*o.out);
    out << result.dump(2) << '\n';
    write_run_config(*o.out, "bench",
                     {{"kb", o.kb ? Json(o.kb->string()) : Json(nullptr)},
                      {"synthetic_names", o.synthetic_names},
                      {"queries", o.queries},
                      {"seed", o.seed}});
  }
  return result;
}

Json run_make_synthetic(const MakeSyntheticOptions& o) {
  const SyntheticBenchmark b = make_synthetic_benchmark(o.config);
  fs::create_directories(o.out_dir);
  {
    auto kb = open_out(o.out_dir / "kb.txt");
    for (const auto& n : b.names) kb << n << '\n';
  }
  write_et_jsonl(b.train, o.out_dir / "train.jsonl");
  write_et_jsonl(b.eval, o.out_dir / "eval.jsonl");
  const auto& c = o.config;
  write_run_config(o.out_dir / "synthetic", "make-synthetic",
                   {{"out_dir", o.out_dir.string()},
                    {"entities", c.entities},
                    {"docs", c.docs},
                    {"min_gold", c.min_gold},
                    {"max_gold", c.max_gold},
                    {"noise_words", c.noise_words},
                    {"name_mention_rate", c.name_mention_rate},
                    {"eval_fraction", c.eval_fraction},
                    {"seed", c.seed}});
  return {{"entities", b.names.size()}, {"train", b.train.size()}, {"eval", b.eval.size()}};
}

std::size_t peak_rss_bytes() {
  std::ifstream in("/proc/self/status");
  std::string line;
  while (std::getline(in, line)) {
    if (line.rfind("VmHWM:", 0) == 0) {
      std::istringstream fields(line.substr(6));
      std::size_t kb = 0;
      fields >> kb;
      return kb * 1024;
    }
  }
  return 0;
}

std::vector<std::size_t> parse_size_list(std::string_view csv) { return parse_list(csv, parse_size); }

std::vector<std::uint64_t> parse_seed_list(std::string_view csv) { return parse_list(csv, parse_u64); }

std::vector<OrderStrategy> parse_strategy_list(std::string_view csv) {
  return parse_list(csv, parse_strategy);
}

}  // namespace ettag
