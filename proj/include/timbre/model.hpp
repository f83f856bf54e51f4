#pragma once

#include <map>
#include <string>
#include <vector>

#include "timbre/graph.hpp"

namespace timbre {

enum class ResidualKind { kBasic, kBottleneck };
enum class Topology { kOneToOne, kManyToMany };

const char* residual_kind_name(ResidualKind k);
ResidualKind residual_kind_from_name(const std::string& s);
const char* topology_name(Topology t);
Topology topology_from_name(const std::string& s);

struct VariantFlags {
  ResidualKind residual_kind = ResidualKind::kBasic;
  bool cyclic_kld = true;
  Topology topology = Topology::kOneToOne;

  bool operator==(const VariantFlags&) const = default;
};

constexpr int kPatchSize = 128;
constexpr int kLatentChannels = 128;
constexpr int kLatentSize = 16;
constexpr float kLeakySlope = 0.2f;

struct ConvLayer {
  NodeP w, b;
  kernels::ConvSpec spec;
};

struct ConvTLayer {
  NodeP w, b;
  kernels::ConvTSpec spec;
};

struct ResidualBlock {
  ResidualKind kind = ResidualKind::kBasic;
  ConvLayer c1, c2, c3;  // c3 only used by the bottleneck kind

  NodeP forward(const NodeP& x) const;
};

struct Encoder {
  ConvLayer c1, c2, c3;
  ResidualBlock r1, r2, r3;

  NodeP forward(const NodeP& x) const;
};

struct Decoder {
  ResidualBlock r2, r3;  // the first decoder residual block is shared
  ConvTLayer t1, t2, t3;
};

struct Discriminator {
  ConvLayer c1, c2, c3, c4, c5;

  NodeP forward(const NodeP& x) const;
};

struct NamedParam {
  std::string name;
  NodeP node;
};

struct ModelBundle {
  VariantFlags variant;
  uint64_t seed = 0;
  std::vector<std::string> domains;

  Encoder encoder;
  ResidualBlock shared_decoder_block;
  std::map<std::string, Decoder> decoders;
  std::map<std::string, Discriminator> discriminators;

  // x: batch x 1 x 128 x 128 in [0,1] -> latent mean batch x 128 x 16 x 16
  NodeP encode(const NodeP& x) const;
  // z: batch x 128 x 16 x 16 -> batch x 1 x 128 x 128 in [0,1]
  NodeP decode(const NodeP& z, const std::string& domain) const;
  // x: batch x 1 x 128 x 128 -> raw score grid batch x 1 x 4 x 4
  NodeP discriminate(const NodeP& x, const std::string& domain) const;

  // value-level forwards for inference (no gradient bookkeeping needed)
  Tensor4 encode_value(const Tensor4& x) const;
  Tensor4 decode_value(const Tensor4& z, const std::string& domain) const;

  std::vector<NamedParam> generator_params() const;  // encoder + shared + decoders
  std::vector<NamedParam> discriminator_params() const;
  std::vector<NamedParam> all_params() const;

  // parameter counts per component, plus "total"
  std::map<std::string, size_t> param_count_report() const;

  const Decoder& decoder(const std::string& domain) const;
  const Discriminator& discriminator(const std::string& domain) const;
};

// z = mu + eta, eta ~ N(0,1) elementwise; deterministic mode returns mu.
NodeP reparameterize(const NodeP& mu, Rng& rng, bool deterministic = false);

ModelBundle build_model(const std::vector<std::string>& domains,
                        const VariantFlags& variant, uint64_t seed);

}  // namespace timbre
