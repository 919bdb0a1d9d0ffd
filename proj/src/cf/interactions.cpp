#include "letter/cf/interactions.hpp"

#include <algorithm>
#include <climits>
#include <fstream>
#include <map>
#include <numeric>
#include <string>
#include <unordered_map>

#include "letter/core/error.hpp"
#include "letter/core/text.hpp"

namespace letter {

std::vector<Interaction> read_interactions(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  std::vector<Interaction> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto body = text::trim(line);
    if (body.empty()) continue;
    const auto f = text::split(body, '\t');
    if (f.size() != 3) throw ParseError("expected 'user<TAB>item<TAB>timestamp'", line_no);
    out.push_back({static_cast<UserId>(text::parse_uint(f[0], line_no)),
                   static_cast<ItemId>(text::parse_uint(f[1], line_no)), text::parse_int(f[2], line_no)});
  }
  return out;
}

void write_interactions(const std::filesystem::path& path, std::span<const Interaction> events) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot open " + path.string() + " for writing");
  for (const auto& e : events) out << e.user << '\t' << e.item << '\t' << e.timestamp << '\n';
  if (!out) throw DataError("failed writing " + path.string());
}

InteractionDataset::InteractionDataset(std::span<const Interaction> events) : count_(events.size()) {
  std::vector<std::size_t> order(events.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::ranges::stable_sort(order, [&](std::size_t a, std::size_t b) {
    if (events[a].user != events[b].user) return events[a].user < events[b].user;
    return events[a].timestamp < events[b].timestamp;
  });
  for (std::size_t i : order) {
    const auto& e = events[i];
    if (users_.empty() || users_.back().user != e.user) users_.push_back({e.user, {}, {}});
    users_.back().items.push_back(e.item);
    users_.back().timestamps.push_back(e.timestamp);
    items_.push_back(e.item);
  }
  std::ranges::sort(items_);
  items_.erase(std::unique(items_.begin(), items_.end()), items_.end());
}

bool InteractionDataset::splittable() const {
  return std::ranges::all_of(users_, [](const UserSequence& u) { return u.items.size() >= 3; });
}

std::vector<Interaction> InteractionDataset::events() const {
  std::vector<Interaction> out;
  out.reserve(count_);
  for (const auto& u : users_)
    for (std::size_t i = 0; i < u.items.size(); ++i) out.push_back({u.user, u.items[i], u.timestamps[i]});
  return out;
}

std::vector<Interaction> filter_min_count(std::vector<Interaction> events, std::size_t min_count) {
  for (;;) {
    std::unordered_map<UserId, std::size_t> per_user;
    std::unordered_map<ItemId, std::size_t> per_item;
    for (const auto& e : events) {
      ++per_user[e.user];
      ++per_item[e.item];
    }
    const auto before = events.size();
    std::erase_if(events, [&](const Interaction& e) {
      return per_user[e.user] < min_count || per_item[e.item] < min_count;
    });
    if (events.size() == before) return events;
  }
}

InteractionDataset split_interactions(std::vector<Interaction> events, std::size_t min_count) {
  events = filter_min_count(std::move(events), min_count);
  if (events.empty()) throw DataError("no interactions left after filtering at min_count=" + std::to_string(min_count));
  InteractionDataset data(events);
  if (!data.splittable())
    throw DataError("every user needs at least 3 interactions for the leave-one-out split (use min_count >= 3)");
  return data;
}

InteractionDataset load_and_split(const std::filesystem::path& interactions_path, std::size_t min_count) {
  return split_interactions(read_interactions(interactions_path), min_count);
}

void write_split_dataset(const std::filesystem::path& path, const InteractionDataset& data) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot open " + path.string() + " for writing");
  for (const auto& u : data.users()) {
    const std::size_t n = u.items.size();
    for (std::size_t i = 0; i < n; ++i) {
      const char* split = i + 1 == n ? "test" : i + 2 == n ? "valid" : "train";
      out << u.user << '\t' << u.items[i] << '\t' << u.timestamps[i] << '\t' << split << '\n';
    }
  }
  if (!out) throw DataError("failed writing " + path.string());
}

InteractionDataset read_split_dataset(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  std::vector<Interaction> events;
  // Per user: latest train timestamp, valid/test timestamps and their counts.
  struct Marks {
    std::int64_t train_max = INT64_MIN, valid = 0, test = 0;
    int valids = 0, tests = 0;
  };
  std::map<UserId, Marks> marks;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto body = text::trim(line);
    if (body.empty()) continue;
    const auto f = text::split(body, '\t');
    if (f.size() != 4) throw ParseError("expected 'user<TAB>item<TAB>timestamp<TAB>split'", line_no);
    const Interaction e{static_cast<UserId>(text::parse_uint(f[0], line_no)),
                        static_cast<ItemId>(text::parse_uint(f[1], line_no)), text::parse_int(f[2], line_no)};
    const auto split = text::trim(f[3]);
    Marks& m = marks[e.user];
    if (split == "train") {
      m.train_max = std::max(m.train_max, e.timestamp);
    } else if (split == "valid") {
      m.valid = e.timestamp;
      ++m.valids;
    } else if (split == "test") {
      m.test = e.timestamp;
      ++m.tests;
    } else {
      throw ParseError("unknown split '" + std::string(split) + "'", line_no);
    }
    events.push_back(e);
  }
  for (const auto& [user, m] : marks)
    if (m.valids != 1 || m.tests != 1 || m.train_max > m.valid || m.valid > m.test)
      throw FormatError("user " + std::to_string(user) +
                        ": split column must mark one valid then one test row after all train rows");
  InteractionDataset data(events);
  if (!data.splittable()) throw FormatError(path.string() + ": a user has fewer than 3 interactions");
  return data;
}

}  // namespace letter
