#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "ettag/commands.hpp"
#include "ettag/error.hpp"

namespace py = pybind11;
using namespace ettag;

namespace {

// Calls back into Python for every step; fine for tests and small inputs.
class CallbackScorer final : public Scorer {
 public:
  CallbackScorer(std::size_t vocab_size,
                 std::function<std::vector<double>(const std::vector<TokenId>&)> fn)
      : vocab_size_(vocab_size), fn_(std::move(fn)) {}

  std::size_t vocab_size() const override { return vocab_size_; }
  std::vector<double> encode(std::span<const TokenId>) const override { return {}; }
  void next_logprobs(std::span<const double>, std::span<const TokenId> prefix,
                     std::span<double> out) const override {
    const auto lp = fn_(std::vector<TokenId>(prefix.begin(), prefix.end()));
    if (lp.size() != out.size()) {
      throw Error(ErrorKind::ScorerContractViolation,
                  "scorer returned " + std::to_string(lp.size()) + " values, expected " +
                      std::to_string(out.size()));
    }
    std::copy(lp.begin(), lp.end(), out.begin());
  }

 private:
  std::size_t vocab_size_;
  std::function<std::vector<double>(const std::vector<TokenId>&)> fn_;
};

py::dict to_dict(const Json& j) { return py::module_::import("json").attr("loads")(j.dump()); }

Json from_dict(const py::object& o) {
  if (o.is_none()) return Json::object();
  return Json::parse(py::module_::import("json").attr("dumps")(o).cast<std::string>());
}

py::dict score_dict(const DocScore& s) {
  py::dict d;
  d["tp"] = s.tp;
  d["fp"] = s.fp;
  d["fn"] = s.fn;
  d["precision"] = s.precision;
  d["recall"] = s.recall;
  d["f1"] = s.f1;
  return d;
}

py::dict record_dict(const ETRecord& r) {
  py::dict d;
  d["doc_id"] = r.doc_id;
  d["text"] = r.text;
  d["gold"] = r.gold;
  d["gold_order"] = r.gold_order ? py::cast(*r.gold_order) : py::none();
  return d;
}

}  // namespace

PYBIND11_MODULE(_ettag, m) {
  m.doc() = "Entity tagging with trie-constrained decoding";

  py::exception<Error>(m, "EttagError", PyExc_ValueError);
  // Instances carry the error kind name as `.kind`.
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      py::object type = py::module_::import("ettag._ettag").attr("EttagError");
      py::object exc = type(std::string(e.what()));
      exc.attr("kind") = std::string(to_string(e.kind()));
      PyErr_SetObject(type.ptr(), exc.ptr());
    }
  });

  m.def("canonicalize", [](std::string_view raw) { return canonicalize(raw).str(); });

  py::class_<EntityCatalog>(m, "EntityCatalog")
      .def_static("from_names", [](const std::vector<std::string>& names) {
        return EntityCatalog::from_names(names);
      })
      .def_static("load", [](const std::filesystem::path& p) {
        return load_catalog(p, guess_catalog_format(p));
      })
      .def("__len__", &EntityCatalog::size)
      .def("name", [](const EntityCatalog& c, EntityId id) { return c.name(id).str(); })
      .def("names", [](const EntityCatalog& c) {
        std::vector<std::string> out;
        for (const auto& n : c.names()) out.push_back(n.str());
        return out;
      })
      .def("find", [](const EntityCatalog& c, std::string_view raw) { return c.find_raw(raw); });

  py::class_<Vocabulary>(m, "Vocabulary")
      .def("__len__", &Vocabulary::size)
      .def("piece", &Vocabulary::piece)
      .def("find", &Vocabulary::find)
      .def("tokenize", [](const Vocabulary& v, std::string_view text, bool output) {
        return tokenize(text, v, output ? TokenizeMode::Output : TokenizeMode::Input);
      }, py::arg("text"), py::arg("output") = false)
      .def("detokenize", [](const Vocabulary& v, const TokenSeq& ids) { return detokenize(ids, v); });

  m.def("build_output_vocabulary", [](const EntityCatalog& c) { return build_output_vocabulary(c); });
  m.def("build_input_vocabulary", [](const std::vector<std::string>& corpus, std::size_t min_count) {
    return build_input_vocabulary(corpus, min_count);
  }, py::arg("corpus"), py::arg("min_count") = 1);

  m.attr("BOS") = reserved::kBos;
  m.attr("EOS") = reserved::kEos;
  m.attr("SEP") = reserved::kSep;
  m.attr("UNK") = reserved::kUnk;

  py::class_<DecodeConfig>(m, "DecodeConfig")
      .def(py::init<>())
      .def_readwrite("beam_size", &DecodeConfig::beam_size)
      .def_readwrite("max_entities", &DecodeConfig::max_entities)
      .def_readwrite("max_tokens", &DecodeConfig::max_tokens)
      .def_readwrite("no_repeat", &DecodeConfig::no_repeat)
      .def_readwrite("allow_empty", &DecodeConfig::allow_empty)
      .def_readwrite("length_normalize", &DecodeConfig::length_normalize)
      .def_readwrite("renormalize_constrained", &DecodeConfig::renormalize_constrained);

  py::class_<TokenTrie>(m, "TokenTrie")
      .def_static("build", [](const EntityCatalog& c, const Vocabulary& v) {
        return TokenTrie::build(c, v);
      })
      .def("stats", [](const TokenTrie& t) {
        const auto s = t.stats();
        py::dict d;
        d["node_count"] = s.node_count;
        d["max_depth"] = s.max_depth;
        d["entity_count"] = s.entity_count;
        return d;
      })
      .def("lookup", [](const TokenTrie& t, const TokenSeq& tokens) { return t.lookup(tokens); })
      // Replays `prefix` through the automaton and returns the legal next tokens.
      .def("allowed_after", [](const TokenTrie& t, const TokenSeq& prefix, const DecodeConfig& c) {
        ConstraintState state;
        for (TokenId tok : prefix) state = step_checked(t, state, tok, c);
        if (state.cursor.finished()) return std::vector<TokenId>{};
        return allowed_tokens(t, state.cursor, state.emitted, c,
                              c.max_tokens > state.length ? c.max_tokens - state.length : 0);
      }, py::arg("prefix"), py::arg("config") = DecodeConfig{})
      .def("parse_output", [](const TokenTrie& t, const TokenSeq& tokens) {
        const auto p = parse_output(tokens, t);
        return py::make_tuple(p.entities, p.dropped);
      });

  m.def("decode", [](const TokenTrie& trie, std::size_t vocab_size,
                     std::function<std::vector<double>(const std::vector<TokenId>&)> logprobs,
                     const DecodeConfig& config) {
    const CallbackScorer scorer(vocab_size, std::move(logprobs));
    const auto best = decode(scorer, trie, {}, config);
    return py::make_tuple(best.tokens, best.score);
  }, py::arg("trie"), py::arg("vocab_size"), py::arg("logprobs"), py::arg("config") = DecodeConfig{},
     "Constrained decode where logprobs(prefix) returns normalized log-probabilities.");

  m.def("prf1", [](std::vector<EntityId> pred, std::vector<EntityId> gold) {
    std::sort(pred.begin(), pred.end());
    pred.erase(std::unique(pred.begin(), pred.end()), pred.end());
    std::sort(gold.begin(), gold.end());
    gold.erase(std::unique(gold.begin(), gold.end()), gold.end());
    return score_dict(prf1(pred, gold));
  });
  m.def("cross_dataset_average", [](const std::vector<double>& v) { return cross_dataset_average(v); });

  m.def("parse_aida_conll", [](const std::filesystem::path& p) {
    py::list out;
    for (const auto& d : parse_aida_conll(p)) {
      py::list mentions;
      for (const auto& mn : d.mentions) {
        mentions.append(py::make_tuple(mn.start, mn.end, mn.entity ? py::cast(*mn.entity) : py::none()));
      }
      py::dict doc;
      doc["doc_id"] = d.doc_id;
      doc["text"] = d.text;
      doc["mentions"] = mentions;
      out.append(doc);
    }
    return out;
  });
  m.def("read_et_jsonl", [](const std::filesystem::path& p) {
    py::list out;
    for (const auto& r : read_et_jsonl(p)) out.append(record_dict(r));
    return out;
  });

  m.def("make_synthetic", [](const std::filesystem::path& out_dir, std::uint64_t seed) {
    MakeSyntheticOptions o;
    o.out_dir = out_dir;
    o.config.seed = seed;
    return to_dict(run_make_synthetic(o));
  }, py::arg("out_dir"), py::arg("seed") = 0);

  m.def("train", [](const std::filesystem::path& train, const std::filesystem::path& kb,
                    const std::filesystem::path& model_out, const py::object& config) {
    TrainOptions o{train, kb, model_out, train_config_from_json(from_dict(config)), 1};
    Json r;
    {
      py::gil_scoped_release release;
      r = run_train(o);
    }
    return to_dict(r);
  }, py::arg("train"), py::arg("kb"), py::arg("model_out"), py::arg("config") = py::none());

  m.def("tag", [](const std::filesystem::path& model, const std::filesystem::path& kb,
                  const std::filesystem::path& in, const std::filesystem::path& out,
                  const py::object& config, std::size_t threads) {
    TagOptions o;
    o.model = model;
    o.kb = kb;
    o.in = in;
    o.out = out;
    o.decode = decode_config_from_json(from_dict(config));
    o.threads = threads;
    Json r;
    {
      py::gil_scoped_release release;
      r = run_tag(o);
    }
    return to_dict(r);
  }, py::arg("model"), py::arg("kb"), py::arg("input"), py::arg("out"),
     py::arg("config") = py::none(), py::arg("threads") = 1);

  m.def("evaluate", [](const std::filesystem::path& pred, const std::filesystem::path& gold) {
    const auto preds = read_predictions(pred);
    const auto golds = read_et_jsonl(gold);
    const auto r = evaluate(preds, golds);
    py::dict d;
    d["micro"] = score_dict(r.micro);
    d["macro"] = score_dict(r.macro);
    d["n_docs"] = r.n_docs;
    return d;
  });

  m.def("convert", [](const std::string& format, const std::filesystem::path& in,
                      const std::filesystem::path& out, const std::filesystem::path& kb,
                      bool keep_empty) {
    return to_dict(run_convert({format, in, out, kb, keep_empty, std::nullopt}));
  }, py::arg("format"), py::arg("input"), py::arg("out"), py::arg("kb"), py::arg("keep_empty") = false);
}
