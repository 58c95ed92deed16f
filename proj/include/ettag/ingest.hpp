#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ettag/catalog.hpp"
#include "ettag/toy_model.hpp"
#include "ettag/vocab.hpp"

namespace ettag {

/// A linked span. Offsets count Unicode scalar values; `entity` is empty for
/// NIL mentions.
struct Mention {
  std::size_t start = 0;
  std::size_t end = 0;
  std::optional<std::string> entity;

  friend bool operator==(const Mention&, const Mention&) = default;
};

struct ELDocument {
  std::string doc_id;
  std::string text;
  std::vector<Mention> mentions;

  friend bool operator==(const ELDocument&, const ELDocument&) = default;
};

/// AIDA CoNLL-YAGO: `-DOCSTART- (id)` starts a document, blank lines end
/// sentences, mention tokens carry a B/I tag plus either `--NME--` or a
/// YAGO id and Wikipedia URL. Tokens are joined with single spaces and
/// sentences with newlines. Throws MalformedLine or DanglingIMention.
std::vector<ELDocument> parse_aida_conll(std::istream& in);
std::vector<ELDocument> parse_aida_conll(const std::filesystem::path& path);

/// One `{"doc_id", "text", "mentions": [{"start", "end", "entity"|null}]}`
/// object per line. Throws SchemaError naming the document and field.
std::vector<ELDocument> parse_normalized_jsonl(std::istream& in);
std::vector<ELDocument> parse_normalized_jsonl(const std::filesystem::path& path);

/// An Entity Tagging record with gold entities by canonical name.
struct ETRecord {
  std::string doc_id;
  std::string text;
  std::vector<std::string> gold;  // catalog id order
  std::optional<std::vector<std::string>> gold_order;

  friend bool operator==(const ETRecord&, const ETRecord&) = default;
};

/// Per-document accounting. NIL counts as one distinct key, so
/// gold + dropped_nil + dropped_oov == distinct_keys.
struct ConversionStats {
  std::size_t mentions = 0;
  std::size_t distinct_keys = 0;
  std::size_t gold = 0;
  std::size_t dropped_nil = 0;
  std::size_t dropped_oov = 0;
  std::size_t title_not_in_catalog = 0;

  ConversionStats& operator+=(const ConversionStats& o);
};

struct Conversion {
  ETRecord record;
  ConversionStats stats;
};

/// Strips spans, discards NIL, deduplicates and drops names the catalog does
/// not know. gold_order follows first-mention start offsets.
Conversion el_to_et(const ELDocument& doc, const EntityCatalog& catalog);

struct WikiAbstract {
  std::string title;
  std::string text;
  std::vector<Mention> anchors;
};

/// One `{"title", "text", "anchors": [{"start", "end", "entity"}]}` object per
/// line. The doc id of the converted record is the title.
std::vector<WikiAbstract> parse_wiki_abstracts(std::istream& in);
std::vector<WikiAbstract> parse_wiki_abstracts(const std::filesystem::path& path);

/// Anchors plus the page title as gold. The title has no span and goes last
/// in gold_order; a title missing from the catalog is counted, not thrown.
Conversion wiki_abstract_to_et(const WikiAbstract& page, const EntityCatalog& catalog);

struct CorpusConversion {
  std::vector<ETRecord> records;
  ConversionStats totals;
  std::size_t documents = 0;
  std::size_t empty_excluded = 0;
};

/// Converts every document; records with an empty gold set are dropped
/// unless keep_empty is set.
CorpusConversion convert_el_corpus(std::span<const ELDocument> docs, const EntityCatalog& catalog,
                                   bool keep_empty = false);
CorpusConversion convert_wiki_corpus(std::span<const WikiAbstract> pages,
                                     const EntityCatalog& catalog, bool keep_empty = false);

void write_et_jsonl(std::span<const ETRecord> records, std::ostream& out);
void write_et_jsonl(std::span<const ETRecord> records, const std::filesystem::path& path);
std::vector<ETRecord> read_et_jsonl(std::istream& in);
std::vector<ETRecord> read_et_jsonl(const std::filesystem::path& path);

/// Tokenizes the text and resolves gold names. Throws UnknownEntity for a
/// name the catalog does not contain.
ETExample make_example(const ETRecord& record, const EntityCatalog& catalog,
                       const Vocabulary& input_vocab);

std::vector<ETExample> make_examples(std::span<const ETRecord> records,
                                     const EntityCatalog& catalog, const Vocabulary& input_vocab);

}  // namespace ettag
