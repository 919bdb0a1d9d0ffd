#include "letter/core/embedding_table.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <string>

#include "letter/core/error.hpp"
#include "letter/core/text.hpp"

namespace letter {

EmbeddingTable::EmbeddingTable(std::vector<ItemId> ids, const Tensor& vectors) {
  if (vectors.rank() != 2 || vectors.rows() != ids.size())
    throw DimensionError("EmbeddingTable: expected [" + std::to_string(ids.size()) + " x d] matrix, got " +
                         vectors.shape_string());
  dim_ = vectors.cols();
  std::vector<std::size_t> order(ids.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return ids[a] < ids[b]; });
  ids_.reserve(ids.size());
  matrix_ = Tensor({ids.size(), dim_});
  for (std::size_t r = 0; r < order.size(); ++r) {
    const ItemId id = ids[order[r]];
    if (!ids_.empty() && ids_.back() == id) throw FormatError("duplicate item id " + std::to_string(id));
    ids_.push_back(id);
    index_.emplace(id, r);
    std::ranges::copy(vectors.row(order[r]), matrix_.row(r).begin());
  }
}

std::size_t EmbeddingTable::index_of(ItemId id) const {
  auto it = index_.find(id);
  if (it == index_.end()) throw DataError("no embedding for item " + std::to_string(id));
  return it->second;
}

Tensor EmbeddingTable::gather(std::span<const ItemId> ids) const {
  Tensor out({ids.size(), dim_});
  for (std::size_t i = 0; i < ids.size(); ++i) std::ranges::copy(vector(ids[i]), out.row(i).begin());
  return out;
}

EmbeddingTable read_embedding_table(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  std::string line;
  std::size_t line_no = 0;
  std::size_t dim = 0, count = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!text::trim(line).empty()) break;
  }
  {
    const auto fields = text::split(text::trim(line), ' ');
    if (fields.size() != 2 || !fields[0].starts_with("dim=") || !fields[1].starts_with("count="))
      throw ParseError("expected header 'dim=<d> count=<n>'", line_no);
    dim = text::parse_uint(fields[0].substr(4), line_no);
    count = text::parse_uint(fields[1].substr(6), line_no);
    if (dim == 0) throw FormatError("embedding dimension must be positive");
  }
  std::vector<ItemId> ids;
  std::vector<double> values;
  ids.reserve(count);
  values.reserve(count * dim);
  while (std::getline(in, line)) {
    ++line_no;
    const auto body = text::trim(line);
    if (body.empty()) continue;
    const auto tab = body.find('\t');
    if (tab == std::string_view::npos) throw ParseError("expected 'item_id<TAB>values'", line_no);
    ids.push_back(static_cast<ItemId>(text::parse_uint(body.substr(0, tab), line_no)));
    const auto cells = text::split(body.substr(tab + 1), ',');
    if (cells.size() != dim)
      throw FormatError("line " + std::to_string(line_no) + ": " + std::to_string(cells.size()) +
                        " values, header says dim=" + std::to_string(dim));
    for (auto c : cells) values.push_back(text::parse_double(c, line_no));
  }
  if (ids.size() != count)
    throw FormatError(path.string() + ": header says count=" + std::to_string(count) + " but file has " +
                      std::to_string(ids.size()) + " rows");
  return EmbeddingTable(std::move(ids), Tensor({count, dim}, std::move(values)));
}

void write_embedding_table(const std::filesystem::path& path, const EmbeddingTable& table) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot open " + path.string() + " for writing");
  out << "dim=" << table.dim() << " count=" << table.size() << '\n';
  for (std::size_t r = 0; r < table.size(); ++r) {
    out << table.ids()[r] << '\t';
    const auto row = table.matrix().row(r);
    for (std::size_t c = 0; c < row.size(); ++c) {
      if (c) out << ',';
      out << text::format_double(row[c]);
    }
    out << '\n';
  }
  if (!out) throw DataError("failed writing " + path.string());
}

}  // namespace letter
