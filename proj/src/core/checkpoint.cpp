#include "transda/checkpoint.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>

TRANSDA_CORE_BEGIN

namespace {

constexpr std::string_view kMagic = "transda-checkpoint 1";

std::size_t meta_size(const Checkpoint& ckpt, const std::string& key) {
  const auto it = ckpt.meta.find(key);
  if (it == ckpt.meta.end()) throw CheckpointError("checkpoint: missing meta key " + key);
  std::size_t v = 0;
  const auto* end = it->second.data() + it->second.size();
  const auto res = std::from_chars(it->second.data(), end, v);
  if (res.ec != std::errc() || res.ptr != end) {
    throw CheckpointError("checkpoint: meta " + key + " is not an integer: " + it->second);
  }
  return v;
}

InputShape input_of(const Checkpoint& ckpt) {
  return {meta_size(ckpt, "input.channels"), meta_size(ckpt, "input.height"),
          meta_size(ckpt, "input.width")};
}

}  // namespace

Checkpoint make_checkpoint(const Classifier& model, const stn::LocalizationNet* localizer) {
  Checkpoint ckpt;
  ckpt.meta["num_classes"] = std::to_string(model.num_classes());
  ckpt.meta["input.channels"] = std::to_string(model.input_shape().channels);
  ckpt.meta["input.height"] = std::to_string(model.input_shape().height);
  ckpt.meta["input.width"] = std::to_string(model.input_shape().width);
  ckpt.tensors = model.parameters();
  if (localizer) {
    ckpt.tensors.insert(ckpt.tensors.end(), localizer->parameters().begin(),
                        localizer->parameters().end());
  }
  return ckpt;
}

Classifier classifier_from(const Checkpoint& ckpt) {
  try {
    return Classifier::from_parameters(ckpt.tensors, meta_size(ckpt, "num_classes"), input_of(ckpt));
  } catch (const ShapeError& e) {
    throw CheckpointError(e.what());
  }
}

std::optional<stn::LocalizationNet> localizer_from(const Checkpoint& ckpt) {
  const bool any = std::any_of(ckpt.tensors.begin(), ckpt.tensors.end(), [](const NamedTensor& t) {
    return t.name.rfind("localizer.", 0) == 0;
  });
  if (!any) return std::nullopt;
  try {
    return stn::LocalizationNet::from_parameters(ckpt.tensors, input_of(ckpt));
  } catch (const ShapeError& e) {
    throw CheckpointError(e.what());
  }
}

std::string serialize_checkpoint(const Checkpoint& ckpt) {
  std::string out(kMagic);
  out += '\n';
  for (const auto& [key, value] : ckpt.meta) out += "meta " + key + " " + value + "\n";
  char buf[64];
  for (const auto& t : ckpt.tensors) {
    out += "tensor " + t.name + " " + std::to_string(t.value.rank());
    for (std::size_t d : t.value.shape()) out += " " + std::to_string(d);
    out += '\n';
    std::size_t col = 0;
    for (Real v : t.value.data()) {
      const auto res = std::to_chars(buf, buf + sizeof buf, v);
      if (col > 0) out += (col % 8 == 0) ? '\n' : ' ';
      out.append(buf, res.ptr);
      ++col;
    }
    out += '\n';
  }
  out += "end\n";
  return out;
}

Checkpoint parse_checkpoint(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != kMagic) {
    throw CheckpointError("checkpoint: bad header (expected '" + std::string(kMagic) + "')");
  }
  Checkpoint ckpt;
  bool ended = false;
  std::string word;
  while (in >> word) {
    if (word == "end") {
      ended = true;
      break;
    }
    if (word == "meta") {
      std::string key, value;
      if (!(in >> key) || !std::getline(in, value)) throw CheckpointError("checkpoint: truncated meta record");
      const auto first = value.find_first_not_of(' ');
      ckpt.meta[key] = first == std::string::npos ? "" : value.substr(first);
    } else if (word == "tensor") {
      std::string name;
      std::size_t rank = 0;
      if (!(in >> name >> rank) || rank > 8) throw CheckpointError("checkpoint: malformed tensor record");
      Shape shape(rank);
      for (auto& d : shape)
        if (!(in >> d)) throw CheckpointError("checkpoint: malformed shape of " + name);
      std::vector<Real> values(shape_numel(shape));
      for (Real& v : values) {
        std::string tok;
        if (!(in >> tok)) throw CheckpointError("checkpoint: tensor " + name + " truncated");
        const auto res = std::from_chars(tok.data(), tok.data() + tok.size(), v);
        if (res.ec != std::errc() || res.ptr != tok.data() + tok.size()) {
          throw CheckpointError("checkpoint: bad value '" + tok + "' in tensor " + name);
        }
      }
      ckpt.tensors.push_back({name, Tensor::from_data(std::move(shape), std::move(values), true)});
    } else {
      throw CheckpointError("checkpoint: unexpected record '" + word + "'");
    }
  }
  if (!ended) throw CheckpointError("checkpoint: missing end marker");
  return ckpt;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw CheckpointError("cannot write checkpoint " + path.string());
  out << serialize_checkpoint(ckpt);
  if (!out) throw CheckpointError("failed writing checkpoint " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot read checkpoint " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  try {
    return parse_checkpoint(ss.str());
  } catch (const CheckpointError& e) {
    throw CheckpointError(path.string() + ": " + e.what());
  }
}

TRANSDA_CORE_END
