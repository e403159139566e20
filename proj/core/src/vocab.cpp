#include "bnrhn/vocab.hpp"

#include <array>

#include "bnrhn/errors.hpp"

namespace bnrhn {

namespace {
constexpr std::array<std::string_view, Vocab::kReserved> kReservedTokens = {"<pad>", "<start>", "<end>", "<unk>"};
}

std::span<const std::string_view> Vocab::reserved_tokens() noexcept { return kReservedTokens; }

Vocab::Vocab() : Vocab(std::vector<std::string>(kReservedTokens.begin(), kReservedTokens.end())) {}

Vocab::Vocab(std::vector<std::string> tokens) : tokens_(std::move(tokens)) {
  if (tokens_.size() < kReserved) throw DataError("vocabulary is missing reserved tokens");
  for (std::size_t i = 0; i < kReserved; ++i) {
    if (tokens_[i] != kReservedTokens[i]) {
      throw DataError("vocabulary id " + std::to_string(i) + " must be " + std::string(kReservedTokens[i]) +
                      ", found '" + tokens_[i] + "'");
    }
  }
  ids_.reserve(tokens_.size());
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    if (!ids_.emplace(tokens_[i], i).second) throw DataError("duplicate vocabulary token '" + tokens_[i] + "'");
  }
}

TokenId Vocab::id(std::string_view token) const {
  const auto it = ids_.find(std::string(token));
  return it == ids_.end() ? kUnk : it->second;
}

bool Vocab::contains(std::string_view token) const { return ids_.contains(std::string(token)); }

const std::string& Vocab::token(TokenId id) const {
  if (id >= tokens_.size()) {
    throw DataError("token id " + std::to_string(id) + " out of range for vocabulary of size " +
                    std::to_string(tokens_.size()));
  }
  return tokens_[id];
}

}  // namespace bnrhn
