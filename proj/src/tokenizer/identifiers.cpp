#include "letter/tokenizer/identifiers.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <numeric>
#include <string>

#include "letter/core/error.hpp"
#include "letter/core/text.hpp"

namespace letter {

IdentifierSet::IdentifierSet(std::size_t levels, std::size_t codebook_size, std::vector<Identifier> ids)
    : levels_(levels), codebook_size_(codebook_size), ids_(std::move(ids)) {
  std::ranges::sort(ids_, {}, &Identifier::item);
  std::map<std::vector<std::uint32_t>, std::size_t> groups;
  std::map<std::pair<std::vector<std::uint32_t>, std::int64_t>, ItemId> seen;
  for (std::size_t i = 0; i < ids_.size(); ++i) {
    const Identifier& id = ids_[i];
    if (id.codes.size() != levels_)
      throw FormatError("item " + std::to_string(id.item) + " has " + std::to_string(id.codes.size()) +
                        " codes, expected " + std::to_string(levels_));
    for (auto c : id.codes)
      if (c >= codebook_size_) throw FormatError("item " + std::to_string(id.item) + ": code out of range");
    if (!index_.emplace(id.item, i).second) throw DataError("duplicate item " + std::to_string(id.item));
    const std::int64_t suffix = id.disambiguator ? static_cast<std::int64_t>(*id.disambiguator) : -1;
    if (auto [it, fresh] = seen.emplace(std::pair{id.codes, suffix}, id.item); !fresh)
      throw DataError("items " + std::to_string(it->second) + " and " + std::to_string(id.item) +
                      " have the same identifier");
    if (id.disambiguator) disambiguator_count_ = std::max(disambiguator_count_, *id.disambiguator + 1);
    ++groups[id.codes];
  }
  distinct_ = groups.size();
  std::size_t colliding = 0;
  for (const auto& [codes, n] : groups)
    if (n > 1) colliding += n;
  collision_rate_ = ids_.empty() ? 0.0 : static_cast<double>(colliding) / static_cast<double>(ids_.size());
}

const Identifier& IdentifierSet::at(ItemId item) const {
  auto it = index_.find(item);
  if (it == index_.end()) throw DataError("item " + std::to_string(item) + " has no identifier");
  return ids_[it->second];
}

IdentifierSet assign_identifiers(std::span<const ItemId> items, std::span<const std::uint32_t> codes,
                                 std::size_t levels, std::size_t codebook_size) {
  if (codes.size() != items.size() * levels)
    throw DimensionError("assign_identifiers: expected " + std::to_string(items.size() * levels) + " codes, got " +
                         std::to_string(codes.size()));
  std::vector<std::size_t> order(items.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::ranges::sort(order, [&](std::size_t a, std::size_t b) { return items[a] < items[b]; });

  std::vector<Identifier> ids;
  ids.reserve(items.size());
  std::map<std::vector<std::uint32_t>, std::vector<std::size_t>> groups;
  for (std::size_t i : order) {
    Identifier id;
    id.item = items[i];
    id.codes.assign(codes.begin() + static_cast<std::ptrdiff_t>(i * levels),
                    codes.begin() + static_cast<std::ptrdiff_t>((i + 1) * levels));
    groups[id.codes].push_back(ids.size());
    ids.push_back(std::move(id));
  }
  for (const auto& [key, members] : groups) {
    if (members.size() < 2) continue;
    for (std::size_t k = 0; k < members.size(); ++k) ids[members[k]].disambiguator = static_cast<std::uint32_t>(k);
  }
  return IdentifierSet(levels, codebook_size, std::move(ids));
}

IdentifierSet assign_identifiers(const EmbeddingTable& semantic, const RqVae& model) {
  const BatchQuantization q = model.quantize(semantic.matrix());
  return assign_identifiers(semantic.ids(), q.codes, q.levels, model.codebooks().size());
}

void write_identifiers(const std::filesystem::path& path, const IdentifierSet& ids) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot open " + path.string() + " for writing");
  out << "levels=" << ids.levels() << " codebook_size=" << ids.codebook_size() << '\n';
  for (const Identifier& id : ids.all()) {
    out << id.item << '\t';
    for (std::size_t l = 0; l < id.codes.size(); ++l) out << (l ? "," : "") << id.codes[l];
    out << '\t';
    if (id.disambiguator)
      out << *id.disambiguator;
    else
      out << '-';
    out << '\n';
  }
  if (!out) throw DataError("failed writing " + path.string());
}

IdentifierSet read_identifiers(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  std::string line;
  std::size_t line_no = 1;
  if (!std::getline(in, line)) throw FormatError(path.string() + " is empty");
  const auto header = text::split(text::trim(line), ' ');
  if (header.size() != 2 || !header[0].starts_with("levels=") || !header[1].starts_with("codebook_size="))
    throw ParseError("expected header 'levels=<L> codebook_size=<N>'", line_no);
  const std::size_t levels = text::parse_uint(header[0].substr(7), line_no);
  const std::size_t size = text::parse_uint(header[1].substr(14), line_no);
  std::vector<Identifier> ids;
  while (std::getline(in, line)) {
    ++line_no;
    const auto body = text::trim(line);
    if (body.empty()) continue;
    const auto fields = text::split(body, '\t');
    if (fields.size() != 3) throw ParseError("expected 3 tab-separated fields", line_no);
    Identifier id;
    id.item = static_cast<ItemId>(text::parse_uint(fields[0], line_no));
    for (auto c : text::split(fields[1], ',')) id.codes.push_back(static_cast<std::uint32_t>(text::parse_uint(c, line_no)));
    if (text::trim(fields[2]) != "-")
      id.disambiguator = static_cast<std::uint32_t>(text::parse_uint(fields[2], line_no));
    ids.push_back(std::move(id));
  }
  return IdentifierSet(levels, size, std::move(ids));
}

}  // namespace letter
