#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace mdenas {

// Candidate operations on a cell edge. Enumerator values are the canonical ids.
enum class OperationKind : std::uint8_t {
  max_pool_3x3 = 0,
  none = 1,
  avg_pool_3x3 = 2,
  skip_connect = 3,
  dil_conv_3x3 = 4,
  dil_conv_5x5 = 5,
  sep_conv_3x3 = 6,
  sep_conv_5x5 = 7,
};

inline constexpr std::size_t kNumOperationKinds = 8;

inline constexpr std::array<std::string_view, kNumOperationKinds> kOperationNames = {
    "max_pool_3x3", "none",         "avg_pool_3x3", "skip_connect",
    "dil_conv_3x3", "dil_conv_5x5", "sep_conv_3x3", "sep_conv_5x5",
};

constexpr std::size_t operation_id(OperationKind op) noexcept {
  return static_cast<std::size_t>(op);
}

constexpr std::string_view operation_name(OperationKind op) noexcept {
  return kOperationNames[operation_id(op)];
}

inline OperationKind operation_from_id(std::size_t id) {
  if (id >= kNumOperationKinds) {
    throw std::out_of_range("operation id " + std::to_string(id) + " out of range");
  }
  return static_cast<OperationKind>(id);
}

inline std::optional<OperationKind> find_operation(std::string_view name) noexcept {
  for (std::size_t i = 0; i < kNumOperationKinds; ++i) {
    if (kOperationNames[i] == name) return static_cast<OperationKind>(i);
  }
  return std::nullopt;
}

inline OperationKind parse_operation(std::string_view name) {
  if (auto op = find_operation(name)) return *op;
  throw std::invalid_argument("unknown operation '" + std::string(name) + "'");
}

/// Ordered set of candidate operations searched on every edge. Position i in
/// the set is the index used by per-edge probability vectors.
class OperationSet {
 public:
  /// The first `count` canonical operations.
  static OperationSet first(std::size_t count) {
    if (count == 0 || count > kNumOperationKinds) {
      throw std::invalid_argument("operation count must be in [1, 8], got " +
                                  std::to_string(count));
    }
    std::vector<OperationKind> ops;
    for (std::size_t i = 0; i < count; ++i) ops.push_back(static_cast<OperationKind>(i));
    return OperationSet(std::move(ops));
  }

  static OperationSet all() { return first(kNumOperationKinds); }

  explicit OperationSet(std::vector<OperationKind> ops) : ops_(std::move(ops)) {
    if (ops_.empty()) throw std::invalid_argument("operation set is empty");
    std::array<bool, kNumOperationKinds> used{};
    for (auto op : ops_) {
      if (used[operation_id(op)]) {
        throw std::invalid_argument("duplicate operation '" +
                                    std::string(operation_name(op)) + "'");
      }
      used[operation_id(op)] = true;
    }
  }

  std::size_t size() const noexcept { return ops_.size(); }
  OperationKind operator[](std::size_t i) const { return ops_.at(i); }
  const std::vector<OperationKind>& kinds() const noexcept { return ops_; }

  std::optional<std::size_t> index_of(OperationKind op) const noexcept {
    for (std::size_t i = 0; i < ops_.size(); ++i) {
      if (ops_[i] == op) return i;
    }
    return std::nullopt;
  }

  std::vector<std::string> names() const {
    std::vector<std::string> out;
    for (auto op : ops_) out.emplace_back(operation_name(op));
    return out;
  }

  friend bool operator==(const OperationSet&, const OperationSet&) = default;

 private:
  std::vector<OperationKind> ops_;
};

}  // namespace mdenas
