#pragma once

#include <compare>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace ettag {

/// Dense index into an EntityCatalog, contiguous in 0..size()-1.
using EntityId = std::uint32_t;

/// A canonical entity name: NFC, trimmed, internal whitespace runs collapsed
/// to one ASCII space, non-empty. Only canonicalize() constructs one.
class EntityName {
 public:
  const std::string& str() const noexcept { return text_; }
  std::string_view view() const noexcept { return text_; }

  friend bool operator==(const EntityName&, const EntityName&) = default;
  friend auto operator<=>(const EntityName&, const EntityName&) = default;

 private:
  explicit EntityName(std::string text) : text_(std::move(text)) {}
  friend EntityName canonicalize(std::string_view raw);

  std::string text_;
};

/// Throws Error(InvalidName) when the result would be empty or the input is
/// not valid UTF-8. Idempotent.
EntityName canonicalize(std::string_view raw);

/// Reserved glyph that may not appear inside a catalog name.
inline constexpr std::string_view kSeparatorGlyph = "[SEP]";

class EntityCatalog {
 public:
  EntityCatalog() = default;

  /// Canonicalizes every raw name; ids follow input order. Throws
  /// DuplicateName listing every offender, InvalidName, or EmptyCatalog.
  static EntityCatalog from_names(std::span<const std::string> raw_names);

  std::size_t size() const noexcept { return names_.size(); }
  bool empty() const noexcept { return names_.empty(); }

  const EntityName& name(EntityId id) const { return names_.at(id); }
  std::span<const EntityName> names() const noexcept { return names_; }

  /// Exact lookup of an already-canonical name.
  std::optional<EntityId> find(std::string_view canonical) const;
  /// Canonicalizes first; invalid names simply are not found.
  std::optional<EntityId> find_raw(std::string_view raw) const;

  std::uint64_t content_hash() const;

 private:
  std::vector<EntityName> names_;
  std::unordered_map<std::string, EntityId> index_;
};

enum class CatalogFormat { Tsv, PlainLines };

/// `.tsv` selects Tsv, everything else PlainLines.
CatalogFormat guess_catalog_format(const std::filesystem::path& path);

/// Plain lines: one name per line. Tsv: `id<TAB>name`; ids must be integers
/// but catalog ids are still assigned in file order. Lines starting with '#'
/// and empty lines are skipped.
EntityCatalog load_catalog(const std::filesystem::path& path, CatalogFormat format);

}  // namespace ettag
