#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace bnrhn {

using TokenId = std::size_t;

/// Token <-> id bijection over [0, size()). Ids 0..3 are reserved.
class Vocab {
 public:
  static constexpr TokenId kPad = 0;
  static constexpr TokenId kStart = 1;
  static constexpr TokenId kEnd = 2;
  static constexpr TokenId kUnk = 3;
  static constexpr std::size_t kReserved = 4;

  /// Only the reserved tokens.
  Vocab();
  /// `tokens[i]` gets id i. The first four must be the reserved tokens, and
  /// no token may repeat; throws DataError otherwise.
  explicit Vocab(std::vector<std::string> tokens);

  [[nodiscard]] std::size_t size() const noexcept { return tokens_.size(); }
  /// UNK for tokens outside the vocabulary.
  [[nodiscard]] TokenId id(std::string_view token) const;
  [[nodiscard]] bool contains(std::string_view token) const;
  [[nodiscard]] const std::string& token(TokenId id) const;
  [[nodiscard]] std::span<const std::string> tokens() const noexcept { return tokens_; }

  static std::span<const std::string_view> reserved_tokens() noexcept;

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, TokenId> ids_;
};

}  // namespace bnrhn
