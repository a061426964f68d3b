#pragma once

#include <string>
#include <vector>

#include "bae/layers.hpp"

namespace bae {

struct Architecture {
    std::string name;
    NetworkSpec encoder;
    NetworkSpec decoder;
};

/// Builds the decoder mirroring `encoder`'s trunk in reverse.
///
/// dense(in,out) becomes dense(out,in), followed by a reshape when the
/// encoder's dense consumed a multi-dimensional input. A stride-2 conv becomes
/// upsample2x2 then a stride-1 conv back to the encoder's input channels and
/// size; a stride-1 conv becomes a stride-1 conv with "full" padding. The
/// mirrored kernel keeps the encoder's size when padding parity allows and is
/// otherwise shrunk by one. maxpool2x2 becomes upsample2x2. `hidden` follows
/// every decoder layer except the last, which is followed by `output`.
NetworkSpec mirror_decoder(const NetworkSpec& encoder, const LayerSpec& hidden, const LayerSpec& output);

/// Fully connected autoencoder: input -> hidden[0] -> ... -> hidden.back() (latent) -> mirrored decoder.
Architecture dense_autoencoder(const Shape& input_shape, const std::vector<std::size_t>& widths,
                               const LayerSpec& hidden = relu());

/// Named encoder/decoder pairs:
///   cifar-conv-paper     3x32x32 -> 16x4x4, three strided convs, relu
///   fmnist-conv-paper    1x28x28 -> 8x2x2, four strided convs, relu
///   cifar-lenet-anomaly  conv/pool/leaky(0.1) x3 + dense 256
///   fmnist-dense-paper   dense 512-256-128-50, leaky(0.1)
///   lenet-cluster        conv(1,8,5)/pool/leaky, conv(8,4,5)/pool/leaky, dense 10
Architecture preset_architecture(const std::string& name);
std::vector<std::string> preset_names();

}  // namespace bae
