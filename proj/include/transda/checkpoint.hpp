#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>

#include "transda/model.hpp"
#include "transda/stn.hpp"

TRANSDA_CORE_BEGIN

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Text format, one record per line:
//   transda-checkpoint 1
//   meta <key> <value...>
//   tensor <name> <rank> <dims...>
//   <values, whitespace separated, row-major, shortest round-trip decimal>
//   end
struct Checkpoint {
  std::map<std::string, std::string> meta;
  ParameterList tensors;
};

Checkpoint make_checkpoint(const Classifier& model, const stn::LocalizationNet* localizer);
Classifier classifier_from(const Checkpoint& ckpt);
// Present only when the checkpoint carries localization-net tensors.
std::optional<stn::LocalizationNet> localizer_from(const Checkpoint& ckpt);

std::string serialize_checkpoint(const Checkpoint& ckpt);
Checkpoint parse_checkpoint(const std::string& text);
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
// Throws CheckpointError on I/O failures and malformed content.
Checkpoint load_checkpoint(const std::filesystem::path& path);

TRANSDA_CORE_END
