#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "letter/core/types.hpp"

namespace letter {

struct Interaction {
  UserId user = 0;
  ItemId item = 0;
  std::int64_t timestamp = 0;
};

/// `user_id<TAB>item_id<TAB>timestamp` per line, any order. ParseError with
/// the line number on malformed input.
std::vector<Interaction> read_interactions(const std::filesystem::path& path);
void write_interactions(const std::filesystem::path& path, std::span<const Interaction> events);

struct UserSequence {
  UserId user = 0;
  std::vector<ItemId> items;  // chronological
  std::vector<std::int64_t> timestamps;
};

/// Per-user chronological sequences with the leave-one-out split: the last
/// item is the test target, the one before it the validation target, the
/// rest is training history.
class InteractionDataset {
 public:
  InteractionDataset() = default;
  /// Groups events by user (ascending user id) and orders each user's events
  /// by timestamp, ties kept in input order.
  explicit InteractionDataset(std::span<const Interaction> events);

  const std::vector<UserSequence>& users() const noexcept { return users_; }
  /// Distinct items, ascending.
  const std::vector<ItemId>& items() const noexcept { return items_; }
  std::size_t interaction_count() const noexcept { return count_; }
  bool empty() const noexcept { return users_.empty(); }

  /// True when every user has at least 3 events, so each split is nonempty.
  bool splittable() const;

  static std::span<const ItemId> train_items(const UserSequence& u) {
    return std::span<const ItemId>(u.items).first(u.items.size() - 2);
  }
  static ItemId validation_target(const UserSequence& u) { return u.items[u.items.size() - 2]; }
  static ItemId test_target(const UserSequence& u) { return u.items.back(); }

  std::vector<Interaction> events() const;

 private:
  std::vector<UserSequence> users_;
  std::vector<ItemId> items_;
  std::size_t count_ = 0;
};

/// Removes users and items with fewer than `min_count` events, repeating
/// until neither remains.
std::vector<Interaction> filter_min_count(std::vector<Interaction> events, std::size_t min_count);

/// Reads, filters to the fixed point, and groups. DataError if nothing
/// survives the filter.
InteractionDataset load_and_split(const std::filesystem::path& interactions_path, std::size_t min_count = 5);
InteractionDataset split_interactions(std::vector<Interaction> events, std::size_t min_count = 5);

/// `user<TAB>item<TAB>timestamp<TAB>split` with split in {train, valid, test}.
void write_split_dataset(const std::filesystem::path& path, const InteractionDataset& data);
InteractionDataset read_split_dataset(const std::filesystem::path& path);

}  // namespace letter
