#pragma once

#include <filesystem>
#include <map>
#include <string>

#include "bnrhn/errors.hpp"
#include "bnrhn/model.hpp"
#include "bnrhn/vocab.hpp"

namespace bnrhn {

inline constexpr int kCheckpointFormatVersion = 1;

class CheckpointError : public DataError {
 public:
  using DataError::DataError;
};

class VersionMismatchError : public CheckpointError {
 public:
  VersionMismatchError(int found, int expected);
  int found;
  int expected;
};

class MalformedDocumentError : public CheckpointError {
 public:
  using CheckpointError::CheckpointError;
};

class ShapeInconsistencyError : public CheckpointError {
 public:
  using CheckpointError::CheckpointError;
};

struct Checkpoint {
  ModelParams params;
  Vocab vocab;
  /// Free-form resolved configuration (key -> value text).
  std::map<std::string, std::string> config;
};

std::string checkpoint_to_json(const Checkpoint& ckpt);
Checkpoint checkpoint_from_json(const std::string& text);

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace bnrhn
