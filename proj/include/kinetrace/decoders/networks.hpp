#pragma once

// The two neural decoders.
//
// MLP:      BN -> D1(128) -> D2(128) -> D3(128) -> D4(16) -> out(3), ReLU
//           after every hidden dense layer, linear output.
// CNN-LSTM: input row viewed as N channels x L lags ->
//           BN -> C1(256, k7) ReLU -> M1(5) -> C2(128, k5) ReLU -> M2(3) ->
//           dropout(0.25) -> LSTM(128, ReLU) -> D1(128) ReLU -> D2(3).

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "kinetrace/errors.hpp"
#include "kinetrace/nn/layers.hpp"
#include "kinetrace/nn/sequential.hpp"
#include "kinetrace/rng.hpp"

namespace kinetrace::decoders {

enum class DecoderKind { mlr, mlp, cnnlstm };

inline std::string_view to_string(DecoderKind k) {
  switch (k) {
    case DecoderKind::mlr: return "mlr";
    case DecoderKind::mlp: return "mlp";
    case DecoderKind::cnnlstm: return "cnnlstm";
  }
  return "?";
}

inline DecoderKind parse_decoder(std::string_view s) {
  if (s == "mlr") return DecoderKind::mlr;
  if (s == "mlp") return DecoderKind::mlp;
  if (s == "cnnlstm") return DecoderKind::cnnlstm;
  throw ArgumentError("unknown decoder '" + std::string(s) + "' (expected mlr|mlp|cnnlstm)");
}

struct MlpLayout {
  static constexpr std::size_t hidden = 128;
  static constexpr std::size_t bottleneck = 16;
};

struct CnnLstmLayout {
  static constexpr std::size_t c1_filters = 256;
  static constexpr std::size_t c1_kernel = 7;
  static constexpr std::size_t m1_window = 5;
  static constexpr std::size_t c2_filters = 128;
  static constexpr std::size_t c2_kernel = 5;
  static constexpr std::size_t m2_window = 3;
  static constexpr double dropout = 0.25;
  static constexpr std::size_t lstm_cells = 128;
  static constexpr std::size_t dense = 128;

  // Sequence length reaching the LSTM: ceil(ceil(L / 5) / 3).
  static std::size_t lstm_steps(std::size_t lags) {
    return nn::MaxPool1d::output_length(nn::MaxPool1d::output_length(lags, m1_window), m2_window);
  }
};

struct NeuralDecoder {
  DecoderKind kind = DecoderKind::mlp;
  std::size_t lags = 0;      // L
  std::size_t channels = 0;  // N
  nn::Sequential net;
  std::vector<std::string> warnings;

  std::size_t input_dim() const noexcept { return lags * channels; }
};

inline NeuralDecoder build_mlp(std::size_t lags, std::size_t channels, std::uint64_t seed) {
  if (lags == 0 || channels == 0) throw ArgumentError("build_mlp: input dimension must be positive");
  NeuralDecoder d;
  d.kind = DecoderKind::mlp;
  d.lags = lags;
  d.channels = channels;
  const std::size_t in = lags * channels;
  std::uint64_t salt = 0;
  d.net.add<nn::BatchNorm>(in);
  d.net.add<nn::Dense>(in, MlpLayout::hidden, derive_seed(seed, salt++));
  d.net.add<nn::Relu>();
  d.net.add<nn::Dense>(MlpLayout::hidden, MlpLayout::hidden, derive_seed(seed, salt++));
  d.net.add<nn::Relu>();
  d.net.add<nn::Dense>(MlpLayout::hidden, MlpLayout::hidden, derive_seed(seed, salt++));
  d.net.add<nn::Relu>();
  d.net.add<nn::Dense>(MlpLayout::hidden, MlpLayout::bottleneck, derive_seed(seed, salt++));
  d.net.add<nn::Relu>();
  d.net.add<nn::Dense>(MlpLayout::bottleneck, 3, derive_seed(seed, salt++));
  return d;
}

inline NeuralDecoder build_mlp(std::size_t input_dim, std::uint64_t seed) { return build_mlp(input_dim, 1, seed); }

inline NeuralDecoder build_cnn_lstm(std::size_t lags, std::size_t channels, std::uint64_t seed) {
  if (lags == 0 || channels == 0) throw ArgumentError("build_cnn_lstm: L and N must be positive");
  using C = CnnLstmLayout;
  NeuralDecoder d;
  d.kind = DecoderKind::cnnlstm;
  d.lags = lags;
  d.channels = channels;
  if (lags < C::c1_kernel)
    d.warnings.push_back("window of " + std::to_string(lags) + " lags is shorter than the first kernel (" +
                         std::to_string(C::c1_kernel) + "); zero padding dominates");
  std::uint64_t salt = 100;
  d.net.add<nn::Reshape>(nn::Shape{channels, lags});
  d.net.add<nn::BatchNorm>(channels);
  d.net.add<nn::Conv1dSame>(channels, C::c1_filters, C::c1_kernel, derive_seed(seed, salt++));
  d.net.add<nn::Relu>();
  d.net.add<nn::MaxPool1d>(C::m1_window);
  d.net.add<nn::Conv1dSame>(C::c1_filters, C::c2_filters, C::c2_kernel, derive_seed(seed, salt++));
  d.net.add<nn::Relu>();
  d.net.add<nn::MaxPool1d>(C::m2_window);
  d.net.add<nn::Dropout>(C::dropout, derive_seed(seed, salt++));
  d.net.add<nn::SwapLastAxes>();
  d.net.add<nn::Lstm>(C::c2_filters, C::lstm_cells, nn::LstmActivation::relu, derive_seed(seed, salt++));
  d.net.add<nn::Dense>(C::lstm_cells, C::dense, derive_seed(seed, salt++));
  d.net.add<nn::Relu>();
  d.net.add<nn::Dense>(C::dense, 3, derive_seed(seed, salt++));
  return d;
}

inline NeuralDecoder build_network(DecoderKind kind, std::size_t lags, std::size_t channels, std::uint64_t seed) {
  switch (kind) {
    case DecoderKind::mlp: return build_mlp(lags, channels, seed);
    case DecoderKind::cnnlstm: return build_cnn_lstm(lags, channels, seed);
    case DecoderKind::mlr: break;
  }
  throw ArgumentError("build_network: mlr is not a neural decoder");
}

}  // namespace kinetrace::decoders
