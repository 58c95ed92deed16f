#include "ettag/ingest.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <json.hpp>
#include <set>
#include <sstream>

#include "ettag/error.hpp"
#include "ettag/unicode.hpp"

namespace ettag {
namespace {

using nlohmann::json;

std::ifstream open_in(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::Io, "cannot open " + path.string());
  return in;
}

template <typename F>
auto with_path(const std::filesystem::path& path, F&& f) {
  auto in = open_in(path);
  try {
    return f(in);
  } catch (const Error& e) {
    throw Error(e.kind(), path.string() + ": " + e.what());
  }
}

std::vector<std::string_view> split_tabs(std::string_view line) {
  std::vector<std::string_view> cols;
  std::size_t start = 0;
  while (true) {
    const auto tab = line.find('\t', start);
    cols.push_back(line.substr(start, tab - start));
    if (tab == std::string_view::npos) break;
    start = tab + 1;
  }
  return cols;
}

int hex_value(char c) {
  if (c >= '0' && c <= '9') return c - '0';
  if (c >= 'a' && c <= 'f') return c - 'a' + 10;
  if (c >= 'A' && c <= 'F') return c - 'A' + 10;
  return -1;
}

std::string underscores_to_spaces(std::string s) {
  std::replace(s.begin(), s.end(), '_', ' ');
  return s;
}

// "http://en.wikipedia.org/wiki/P._W._Botha" -> "P. W. Botha"
std::optional<std::string> title_from_url(std::string_view url) {
  const auto at = url.find("/wiki/");
  if (at == std::string_view::npos) return std::nullopt;
  std::string_view enc = url.substr(at + 6);
  std::string out;
  for (std::size_t i = 0; i < enc.size(); ++i) {
    if (enc[i] == '%' && i + 2 < enc.size()) {
      const int hi = hex_value(enc[i + 1]);
      const int lo = hex_value(enc[i + 2]);
      if (hi >= 0 && lo >= 0) {
        out.push_back(static_cast<char>(hi * 16 + lo));
        i += 2;
        continue;
      }
    }
    out.push_back(enc[i]);
  }
  if (out.empty() || !unicode::is_valid_utf8(out)) return std::nullopt;
  return underscores_to_spaces(std::move(out));
}

// YAGO ids escape non-ASCII as \uXXXX.
std::optional<std::string> title_from_yago(std::string_view id) {
  std::string out;
  for (std::size_t i = 0; i < id.size(); ++i) {
    if (id[i] == '\\' && i + 6 <= id.size() && id[i + 1] == 'u') {
      char32_t cp = 0;
      bool ok = true;
      for (std::size_t j = i + 2; j < i + 6; ++j) {
        const int v = hex_value(id[j]);
        if (v < 0) {
          ok = false;
          break;
        }
        cp = cp * 16 + static_cast<char32_t>(v);
      }
      if (ok && !(cp >= 0xD800 && cp <= 0xDFFF)) {
        unicode::append(out, cp);
        i += 5;
        continue;
      }
    }
    out.push_back(id[i]);
  }
  if (out.empty()) return std::nullopt;
  return underscores_to_spaces(std::move(out));
}

struct ConllBuilder {
  std::vector<ELDocument> docs;
  ELDocument* doc = nullptr;
  std::size_t length = 0;         // code points in doc->text
  bool sentence_open = false;
  std::optional<std::size_t> open;  // index into doc->mentions
  std::string open_surface;

  void close_mention() { open.reset(); }

  void end_sentence() {
    close_mention();
    sentence_open = false;
  }

  void start_doc(std::string id) {
    end_sentence();
    docs.push_back({std::move(id), {}, {}});
    doc = &docs.back();
    length = 0;
  }

  // Returns the code-point span of the appended token.
  std::pair<std::size_t, std::size_t> add_token(std::string_view token) {
    if (length > 0) {
      doc->text.push_back(sentence_open ? ' ' : '\n');
      ++length;
    }
    sentence_open = true;
    const std::size_t start = length;
    doc->text.append(token);
    length += unicode::length(token);
    return {start, length};
  }
};

std::string doc_id_from_docstart(std::string_view line) {
  const auto open = line.find('(');
  const auto close = line.rfind(')');
  if (open != std::string_view::npos && close != std::string_view::npos && close > open) {
    return std::string(line.substr(open + 1, close - open - 1));
  }
  return {};
}

std::size_t get_offset(const json& m, const char* field, const std::string& doc_id) {
  if (!m.contains(field) || !m[field].is_number_unsigned()) {
    throw Error(ErrorKind::SchemaError, "document " + doc_id + ": field '" + field +
                                            "' must be a non-negative integer");
  }
  return m[field].get<std::size_t>();
}

std::string get_string(const json& j, const char* field, const std::string& doc_id) {
  if (!j.contains(field) || !j[field].is_string()) {
    throw Error(ErrorKind::SchemaError,
                "document " + doc_id + ": field '" + field + "' must be a string");
  }
  auto s = j[field].get<std::string>();
  if (!unicode::is_valid_utf8(s)) {
    throw Error(ErrorKind::SchemaError,
                "document " + doc_id + ": field '" + field + "' is not valid UTF-8");
  }
  return s;
}

std::vector<Mention> parse_spans(const json& j, const char* field, const std::string& doc_id,
                                 std::size_t text_length, bool entity_required) {
  if (!j.contains(field) || !j[field].is_array()) {
    throw Error(ErrorKind::SchemaError,
                "document " + doc_id + ": field '" + field + "' must be an array");
  }
  std::vector<Mention> out;
  for (const auto& m : j[field]) {
    if (!m.is_object()) {
      throw Error(ErrorKind::SchemaError,
                  "document " + doc_id + ": field '" + field + "' holds a non-object");
    }
    Mention mention;
    mention.start = get_offset(m, "start", doc_id);
    mention.end = get_offset(m, "end", doc_id);
    if (!(mention.start < mention.end && mention.end <= text_length)) {
      throw Error(ErrorKind::SchemaError, "document " + doc_id + ": field '" + field +
                                              "' has span [" + std::to_string(mention.start) +
                                              ":" + std::to_string(mention.end) +
                                              "] outside the text");
    }
    if (m.contains("entity") && !m["entity"].is_null()) {
      mention.entity = get_string(m, "entity", doc_id);
    } else if (entity_required) {
      throw Error(ErrorKind::SchemaError,
                  "document " + doc_id + ": field 'entity' is required in '" + field + "'");
    }
    out.push_back(std::move(mention));
  }
  std::vector<Mention> sorted = out;
  std::sort(sorted.begin(), sorted.end(),
            [](const Mention& a, const Mention& b) { return a.start < b.start; });
  for (std::size_t i = 1; i < sorted.size(); ++i) {
    if (sorted[i].start < sorted[i - 1].end) {
      throw Error(ErrorKind::SchemaError,
                  "document " + doc_id + ": field '" + field + "' has overlapping spans");
    }
  }
  return out;
}

template <typename F>
void for_each_json_line(std::istream& in, F&& f) {
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw Error(ErrorKind::SchemaError,
                  "line " + std::to_string(line_no) + ": invalid JSON: " + e.what());
    }
    if (!j.is_object()) {
      throw Error(ErrorKind::SchemaError, "line " + std::to_string(line_no) + ": not an object");
    }
    f(j, line_no);
  }
}

// Shared by the EL and wiki conversions. `spans` are visited in text order;
// `extra_last` is an entity without a span appended after them.
Conversion convert(std::string doc_id, std::string text, const std::vector<Mention>& spans,
                   const std::optional<std::string>& extra_last, const EntityCatalog& catalog) {
  std::vector<const Mention*> ordered;
  for (const auto& m : spans) ordered.push_back(&m);
  std::stable_sort(ordered.begin(), ordered.end(),
                   [](const Mention* a, const Mention* b) { return a->start < b->start; });

  Conversion c;
  c.stats.mentions = spans.size();
  std::set<std::string> keys;
  bool saw_nil = false;
  std::vector<EntityId> order;
  std::set<EntityId> seen;

  auto visit = [&](const std::optional<std::string>& entity, bool is_title) {
    if (!entity) {
      saw_nil = true;
      return;
    }
    std::optional<EntityId> id;
    std::string key;
    try {
      const EntityName name = canonicalize(*entity);
      key = name.str();
      id = catalog.find(key);
    } catch (const Error&) {
      key = "\x01" + *entity;  // uncanonicalizable; never in the catalog
    }
    const bool fresh = keys.insert(key).second;
    if (!id) {
      if (fresh) ++c.stats.dropped_oov;
      if (fresh && is_title) ++c.stats.title_not_in_catalog;
      return;
    }
    if (seen.insert(*id).second) order.push_back(*id);
  };
  for (const Mention* m : ordered) visit(m->entity, false);
  if (extra_last) visit(extra_last, true);

  c.stats.dropped_nil = saw_nil ? 1 : 0;
  c.stats.distinct_keys = keys.size() + c.stats.dropped_nil;
  c.stats.gold = order.size();

  c.record.doc_id = std::move(doc_id);
  c.record.text = std::move(text);
  std::vector<EntityId> sorted = order;
  std::sort(sorted.begin(), sorted.end());
  for (EntityId id : sorted) c.record.gold.push_back(catalog.name(id).str());
  std::vector<std::string> names;
  for (EntityId id : order) names.push_back(catalog.name(id).str());
  c.record.gold_order = std::move(names);
  return c;
}

}  // namespace

std::vector<ELDocument> parse_aida_conll(std::istream& in) {
  ConllBuilder b;
  std::string raw;
  std::size_t line_no = 0;
  auto malformed = [&](const std::string& why) {
    return Error(ErrorKind::MalformedLine, "line " + std::to_string(line_no) + ": " + why);
  };

  while (std::getline(in, raw)) {
    ++line_no;
    std::string_view line = raw;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.starts_with("-DOCSTART-")) {
      std::string id = doc_id_from_docstart(line);
      if (id.empty()) id = std::to_string(b.docs.size());
      b.start_doc(std::move(id));
      continue;
    }
    if (line.empty()) {
      if (b.doc) b.end_sentence();
      continue;
    }
    if (!b.doc) throw malformed("token before the first -DOCSTART- line");
    if (!unicode::is_valid_utf8(line)) throw malformed("invalid UTF-8");

    const auto cols = split_tabs(line);
    if (cols[0].empty()) throw malformed("empty token");
    if (cols.size() == 1) {
      b.close_mention();
      b.add_token(cols[0]);
      continue;
    }
    if (cols.size() < 4) throw malformed("mention line needs at least 4 columns");
    const std::string_view tag = cols[1];
    if (tag != "B" && tag != "I") throw malformed("unknown tag '" + std::string(tag) + "'");

    std::optional<std::string> entity;
    if (cols[3] != "--NME--") {
      if (cols.size() >= 5) entity = title_from_url(cols[4]);
      if (!entity) entity = title_from_yago(cols[3]);
      if (!entity) throw malformed("mention without an entity");
    }

    if (tag == "I") {
      if (!b.open || b.open_surface != cols[2] ||
          b.doc->mentions[*b.open].entity != entity) {
        throw Error(ErrorKind::DanglingIMention,
                    "line " + std::to_string(line_no) + ": I tag does not continue a mention");
      }
      const auto [start, end] = b.add_token(cols[0]);
      (void)start;
      b.doc->mentions[*b.open].end = end;
      continue;
    }
    const auto [start, end] = b.add_token(cols[0]);
    b.doc->mentions.push_back({start, end, std::move(entity)});
    b.open = b.doc->mentions.size() - 1;
    b.open_surface = std::string(cols[2]);
  }
  return std::move(b.docs);
}

std::vector<ELDocument> parse_aida_conll(const std::filesystem::path& path) {
  return with_path(path, [](std::istream& in) { return parse_aida_conll(in); });
}

std::vector<ELDocument> parse_normalized_jsonl(std::istream& in) {
  std::vector<ELDocument> docs;
  for_each_json_line(in, [&](const json& j, std::size_t line_no) {
    const std::string where = "line " + std::to_string(line_no);
    ELDocument d;
    d.doc_id = get_string(j, "doc_id", where);
    d.text = get_string(j, "text", d.doc_id);
    d.mentions = parse_spans(j, "mentions", d.doc_id, unicode::length(d.text), false);
    docs.push_back(std::move(d));
  });
  return docs;
}

std::vector<ELDocument> parse_normalized_jsonl(const std::filesystem::path& path) {
  return with_path(path, [](std::istream& in) { return parse_normalized_jsonl(in); });
}

ConversionStats& ConversionStats::operator+=(const ConversionStats& o) {
  mentions += o.mentions;
  distinct_keys += o.distinct_keys;
  gold += o.gold;
  dropped_nil += o.dropped_nil;
  dropped_oov += o.dropped_oov;
  title_not_in_catalog += o.title_not_in_catalog;
  return *this;
}

Conversion el_to_et(const ELDocument& doc, const EntityCatalog& catalog) {
  return convert(doc.doc_id, doc.text, doc.mentions, std::nullopt, catalog);
}

std::vector<WikiAbstract> parse_wiki_abstracts(std::istream& in) {
  std::vector<WikiAbstract> pages;
  for_each_json_line(in, [&](const json& j, std::size_t line_no) {
    WikiAbstract p;
    p.title = get_string(j, "title", "line " + std::to_string(line_no));
    p.text = get_string(j, "text", p.title);
    p.anchors = parse_spans(j, "anchors", p.title, unicode::length(p.text), true);
    pages.push_back(std::move(p));
  });
  return pages;
}

std::vector<WikiAbstract> parse_wiki_abstracts(const std::filesystem::path& path) {
  return with_path(path, [](std::istream& in) { return parse_wiki_abstracts(in); });
}

Conversion wiki_abstract_to_et(const WikiAbstract& page, const EntityCatalog& catalog) {
  return convert(page.title, page.text, page.anchors, page.title, catalog);
}

CorpusConversion convert_el_corpus(std::span<const ELDocument> docs, const EntityCatalog& catalog,
                                   bool keep_empty) {
  CorpusConversion out;
  for (const auto& d : docs) {
    auto c = el_to_et(d, catalog);
    ++out.documents;
    out.totals += c.stats;
    if (c.record.gold.empty() && !keep_empty) {
      ++out.empty_excluded;
      continue;
    }
    out.records.push_back(std::move(c.record));
  }
  return out;
}

CorpusConversion convert_wiki_corpus(std::span<const WikiAbstract> pages,
                                     const EntityCatalog& catalog, bool keep_empty) {
  CorpusConversion out;
  for (const auto& p : pages) {
    auto c = wiki_abstract_to_et(p, catalog);
    ++out.documents;
    out.totals += c.stats;
    if (c.record.gold.empty() && !keep_empty) {
      ++out.empty_excluded;
      continue;
    }
    out.records.push_back(std::move(c.record));
  }
  return out;
}

void write_et_jsonl(std::span<const ETRecord> records, std::ostream& out) {
  for (const auto& r : records) {
    json j;
    j["doc_id"] = r.doc_id;
    j["text"] = r.text;
    j["gold"] = r.gold;
    j["gold_order"] = r.gold_order ? json(*r.gold_order) : json(nullptr);
    out << j.dump() << '\n';
  }
}

void write_et_jsonl(std::span<const ETRecord> records, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::Io, "cannot write " + path.string());
  write_et_jsonl(records, out);
  if (!out) throw Error(ErrorKind::Io, "failed writing " + path.string());
}

std::vector<ETRecord> read_et_jsonl(std::istream& in) {
  std::vector<ETRecord> records;
  auto names = [](const json& j, const char* field, const std::string& doc_id) {
    if (!j.is_array()) {
      throw Error(ErrorKind::SchemaError,
                  "document " + doc_id + ": field '" + field + "' must be an array");
    }
    std::vector<std::string> out;
    for (const auto& v : j) {
      if (!v.is_string()) {
        throw Error(ErrorKind::SchemaError,
                    "document " + doc_id + ": field '" + field + "' must hold strings");
      }
      out.push_back(v.get<std::string>());
    }
    return out;
  };
  for_each_json_line(in, [&](const json& j, std::size_t line_no) {
    ETRecord r;
    r.doc_id = get_string(j, "doc_id", "line " + std::to_string(line_no));
    r.text = get_string(j, "text", r.doc_id);
    if (!j.contains("gold")) {
      throw Error(ErrorKind::SchemaError, "document " + r.doc_id + ": field 'gold' is missing");
    }
    r.gold = names(j["gold"], "gold", r.doc_id);
    if (j.contains("gold_order") && !j["gold_order"].is_null()) {
      r.gold_order = names(j["gold_order"], "gold_order", r.doc_id);
    }
    records.push_back(std::move(r));
  });
  return records;
}

std::vector<ETRecord> read_et_jsonl(const std::filesystem::path& path) {
  return with_path(path, [](std::istream& in) { return read_et_jsonl(in); });
}

ETExample make_example(const ETRecord& record, const EntityCatalog& catalog,
                       const Vocabulary& input_vocab) {
  auto resolve = [&](const std::string& name) {
    auto id = catalog.find_raw(name);
    if (!id) {
      throw Error(ErrorKind::UnknownEntity,
                  "document " + record.doc_id + ": entity '" + name + "' is not in the catalog");
    }
    return *id;
  };
  ETExample ex;
  ex.doc_id = record.doc_id;
  ex.input = tokenize(record.text, input_vocab, TokenizeMode::Input);
  for (const auto& n : record.gold) ex.gold.push_back(resolve(n));
  std::sort(ex.gold.begin(), ex.gold.end());
  ex.gold.erase(std::unique(ex.gold.begin(), ex.gold.end()), ex.gold.end());
  if (record.gold_order) {
    std::vector<EntityId> order;
    for (const auto& n : *record.gold_order) order.push_back(resolve(n));
    ex.gold_order = std::move(order);
  }
  return ex;
}

std::vector<ETExample> make_examples(std::span<const ETRecord> records,
                                     const EntityCatalog& catalog, const Vocabulary& input_vocab) {
  std::vector<ETExample> out;
  out.reserve(records.size());
  for (const auto& r : records) out.push_back(make_example(r, catalog, input_vocab));
  return out;
}

}  // namespace ettag
