#pragma once

#include <bit>
#include <cstdint>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "kinetrace/errors.hpp"
#include "kinetrace/nn/layers.hpp"
#include "kinetrace/nn/tensor.hpp"

namespace kinetrace::nn {

// Layer stack. Copying deep-copies every layer (parameters and caches).
class Sequential {
 public:
  Sequential() = default;
  Sequential(const Sequential& o) {
    for (const auto& l : o.layers_) layers_.push_back(l->clone());
  }
  Sequential& operator=(const Sequential& o) {
    if (this != &o) {
      Sequential tmp(o);
      layers_ = std::move(tmp.layers_);
    }
    return *this;
  }
  Sequential(Sequential&&) noexcept = default;
  Sequential& operator=(Sequential&&) noexcept = default;

  template <typename L, typename... Args>
  L& add(Args&&... args) {
    auto layer = std::make_unique<L>(std::forward<Args>(args)...);
    L& ref = *layer;
    layers_.push_back(std::move(layer));
    return ref;
  }

  std::size_t size() const noexcept { return layers_.size(); }
  Layer& layer(std::size_t i) { return *layers_.at(i); }

  Tensor forward(const Tensor& x, Mode mode) {
    Tensor h = x;
    for (auto& l : layers_) h = l->forward(h, mode);
    return h;
  }

  Tensor backward(const Tensor& grad) {
    Tensor g = grad;
    for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) g = (*it)->backward(g);
    return g;
  }

  // Every parameter and buffer, named "<index>.<kind>.<name>".
  std::vector<std::pair<std::string, Parameter*>> named_parameters() {
    std::vector<std::pair<std::string, Parameter*>> out;
    for (std::size_t i = 0; i < layers_.size(); ++i)
      for (Parameter* p : layers_[i]->parameters())
        out.emplace_back(std::to_string(i) + "." + layers_[i]->kind() + "." + p->name, p);
    return out;
  }

  std::vector<Parameter*> parameters() {
    std::vector<Parameter*> out;
    for (auto& [name, p] : named_parameters()) out.push_back(p);
    return out;
  }

  std::size_t parameter_count() {
    std::size_t n = 0;
    for (Parameter* p : parameters())
      if (p->trainable) n += p->value.size();
    return n;
  }

  std::vector<Tensor> snapshot() {
    std::vector<Tensor> s;
    for (Parameter* p : parameters()) s.push_back(p->value);
    return s;
  }

  void restore(const std::vector<Tensor>& s) {
    auto ps = parameters();
    if (s.size() != ps.size()) throw ShapeError("restore: snapshot does not match network");
    for (std::size_t i = 0; i < ps.size(); ++i) {
      if (s[i].shape() != ps[i]->value.shape()) throw ShapeError("restore: shape mismatch for " + ps[i]->name);
      ps[i]->value = s[i];
    }
  }

 private:
  std::vector<std::unique_ptr<Layer>> layers_;
};

// Parameter state as a manifest of (name, shape) entries plus one flat
// little-endian float64 blob in manifest order.
struct ParameterState {
  nlohmann::ordered_json manifest = nlohmann::ordered_json::array();
  std::vector<unsigned char> blob;
};

inline ParameterState export_state(Sequential& net) {
  ParameterState st;
  for (auto& [name, p] : net.named_parameters()) {
    st.manifest.push_back({{"name", name}, {"shape", p->value.shape()}});
    for (double v : p->value.values()) {
      const auto bits = std::bit_cast<std::uint64_t>(v);
      for (int b = 0; b < 8; ++b) st.blob.push_back(static_cast<unsigned char>(bits >> (8 * b)));
    }
  }
  return st;
}

inline void import_state(Sequential& net, const nlohmann::json& manifest, const std::vector<unsigned char>& blob) {
  auto named = net.named_parameters();
  if (!manifest.is_array() || manifest.size() != named.size())
    throw FormatError("parameter manifest does not match the network layout");
  std::size_t offset = 0;
  for (std::size_t k = 0; k < named.size(); ++k) {
    auto& [name, p] = named[k];
    if (manifest[k].at("name").get<std::string>() != name) throw FormatError("parameter manifest: unexpected entry " + manifest[k].at("name").get<std::string>());
    if (manifest[k].at("shape").get<Shape>() != p->value.shape()) throw FormatError("parameter manifest: shape mismatch for " + name);
    const std::size_t n = p->value.size();
    if (offset + 8 * n > blob.size()) throw FormatError("parameter blob truncated");
    for (std::size_t i = 0; i < n; ++i) {
      std::uint64_t bits = 0;
      for (int b = 0; b < 8; ++b) bits |= static_cast<std::uint64_t>(blob[offset + 8 * i + b]) << (8 * b);
      p->value[i] = std::bit_cast<double>(bits);
    }
    offset += 8 * n;
  }
  if (offset != blob.size()) throw FormatError("parameter blob has trailing bytes");
}

}  // namespace kinetrace::nn
