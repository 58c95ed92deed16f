#include "ettag/catalog.hpp"

#include <charconv>
#include <fstream>

#include "ettag/error.hpp"
#include "ettag/unicode.hpp"

namespace ettag {

EntityName canonicalize(std::string_view raw) {
  if (!unicode::is_valid_utf8(raw)) {
    throw Error(ErrorKind::InvalidName, "entity name is not valid UTF-8");
  }
  const std::string normalized = unicode::nfc(raw);

  std::string out;
  out.reserve(normalized.size());
  bool pending_space = false;
  for (char32_t cp : unicode::decode(normalized)) {
    if (unicode::is_whitespace(cp)) {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) {
      out.push_back(' ');
      pending_space = false;
    }
    unicode::append(out, cp);
  }
  if (out.empty()) {
    throw Error(ErrorKind::InvalidName, "entity name is empty after normalization");
  }
  return EntityName(std::move(out));
}

EntityCatalog EntityCatalog::from_names(std::span<const std::string> raw_names) {
  if (raw_names.empty()) {
    throw Error(ErrorKind::EmptyCatalog, "catalog has no entities");
  }
  EntityCatalog catalog;
  catalog.names_.reserve(raw_names.size());
  catalog.index_.reserve(raw_names.size());

  std::vector<std::string> duplicates;
  for (const auto& raw : raw_names) {
    EntityName name = canonicalize(raw);
    if (name.view().find(kSeparatorGlyph) != std::string_view::npos) {
      throw Error(ErrorKind::InvalidName,
                  "entity name contains the reserved separator glyph: " + name.str());
    }
    const auto id = static_cast<EntityId>(catalog.names_.size());
    if (!catalog.index_.emplace(name.str(), id).second) {
      duplicates.push_back(name.str());
      continue;
    }
    catalog.names_.push_back(std::move(name));
  }
  if (!duplicates.empty()) {
    std::string msg = "duplicate canonical names:";
    const std::size_t shown = std::min<std::size_t>(duplicates.size(), 20);
    for (std::size_t i = 0; i < shown; ++i) msg += " \"" + duplicates[i] + "\"";
    if (shown < duplicates.size()) {
      msg += " (+" + std::to_string(duplicates.size() - shown) + " more)";
    }
    throw Error(ErrorKind::DuplicateName, msg);
  }
  return catalog;
}

std::optional<EntityId> EntityCatalog::find(std::string_view canonical) const {
  auto it = index_.find(std::string(canonical));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

std::optional<EntityId> EntityCatalog::find_raw(std::string_view raw) const {
  try {
    return find(canonicalize(raw).view());
  } catch (const Error&) {
    return std::nullopt;
  }
}

std::uint64_t EntityCatalog::content_hash() const {
  ContentHash h;
  h.update_u64(names_.size());
  for (const auto& n : names_) h.update(n.view());
  return h.value();
}

CatalogFormat guess_catalog_format(const std::filesystem::path& path) {
  return path.extension() == ".tsv" ? CatalogFormat::Tsv : CatalogFormat::PlainLines;
}

EntityCatalog load_catalog(const std::filesystem::path& path, CatalogFormat format) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw Error(ErrorKind::Io, "cannot open knowledge base file: " + path.string());
  }
  std::vector<std::string> raw;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line.front() == '#') continue;
    if (format == CatalogFormat::Tsv) {
      const auto tab = line.find('\t');
      if (tab == std::string::npos) {
        throw Error(ErrorKind::InvalidName,
                    path.string() + ":" + std::to_string(line_no) + ": expected id<TAB>name");
      }
      long long id = 0;
      const auto* first = line.data();
      const auto [ptr, ec] = std::from_chars(first, first + tab, id);
      if (ec != std::errc{} || ptr != first + tab || id < 0) {
        throw Error(ErrorKind::InvalidName,
                    path.string() + ":" + std::to_string(line_no) + ": bad entity id");
      }
      raw.push_back(line.substr(tab + 1));
    } else {
      raw.push_back(line);
    }
  }
  if (in.bad()) {
    throw Error(ErrorKind::Io, "read error on " + path.string());
  }
  try {
    return EntityCatalog::from_names(raw);
  } catch (const Error& e) {
    throw Error(e.kind(), path.string() + ": " + e.what());
  }
}

}  // namespace ettag
