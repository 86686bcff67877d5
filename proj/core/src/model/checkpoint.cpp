#include "vtp/model/checkpoint.hpp"

#include <algorithm>
#include <set>

#include "vtp/error.hpp"
#include "vtp/io/container.hpp"

namespace vtp::model {

namespace {

std::string component_of(const std::string& name) { return name.substr(0, name.find('.')); }

}  // namespace

bool Checkpoint::has_component(const std::string& component) const {
  return std::any_of(params.begin(), params.end(), [&](const auto& p) { return component_of(p.name) == component; });
}

bool Checkpoint::is_frozen(const std::string& component) const {
  return std::find(frozen.begin(), frozen.end(), component) != frozen.end();
}

std::vector<std::string> Checkpoint::components() const {
  std::vector<std::string> out;
  for (const auto& p : params) {
    const std::string c = component_of(p.name);
    if (std::find(out.begin(), out.end(), c) == out.end()) out.push_back(c);
  }
  return out;
}

const nn::Tensor& Checkpoint::param(const std::string& name) const {
  for (const auto& p : params)
    if (p.name == name) return p.tensor;
  fail(ErrorCode::kMissingInput, "checkpoint has no parameter '" + name + "'");
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  io::Container c;
  c.magic = kCheckpointMagic;
  c.meta = {{"kind", ckpt.kind}, {"config", ckpt.config}, {"extra", ckpt.extra}, {"frozen", ckpt.frozen}};
  for (const auto& p : ckpt.params) c.arrays.push_back(io::make_array(p.name, p.tensor.shape(), p.tensor.data()));
  io::write_container(path, c);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  const io::Container c = io::read_container(path, kCheckpointMagic);
  Checkpoint ckpt;
  try {
    ckpt.kind = c.meta.at("kind").get<std::string>();
    ckpt.config = c.meta.at("config");
    ckpt.extra = c.meta.at("extra");
    ckpt.frozen = c.meta.at("frozen").get<std::vector<std::string>>();
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kCorrupt, "'" + path.string() + "': bad checkpoint header: " + e.what());
  }
  for (const auto& a : c.arrays) {
    require(a.dtype == io::DType::kF64, ErrorCode::kCorrupt, "'" + path.string() + "': parameter '" + a.name + "' is not f64");
    ckpt.params.push_back({a.name, nn::Tensor::from(a.shape, a.as_f64())});
  }
  return ckpt;
}

Checkpoint freeze(Checkpoint ckpt, const std::string& component) {
  if (!ckpt.has_component(component)) {
    std::string known;
    for (const auto& c : ckpt.components()) known += (known.empty() ? "" : ", ") + c;
    fail(ErrorCode::kUnknownComponent, "no component '" + component + "' in checkpoint (has: " + known + ")");
  }
  if (!ckpt.is_frozen(component)) ckpt.frozen.push_back(component);
  std::sort(ckpt.frozen.begin(), ckpt.frozen.end());
  return ckpt;
}

std::vector<nn::NamedTensor> snapshot(const nn::Module& module, const std::string& prefix) {
  auto params = module.named_parameters(prefix);
  for (auto& p : params) p.tensor = p.tensor.clone();
  return params;
}

}  // namespace vtp::model
