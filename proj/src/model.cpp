#include "timbre/model.hpp"

#include <algorithm>
#include <cmath>
#include <set>

namespace timbre {

namespace {

Tensor4 init_conv_weight(int out_c, int in_c, int kh, int kw, Rng& rng) {
  Tensor4 w(out_c, in_c, kh, kw);
  const double std = std::sqrt(2.0 / (static_cast<double>(in_c) * kh * kw));
  for (float& v : w.v) v = static_cast<float>(rng.normal() * std);
  return w;
}

// transposed-conv weights are stored [inC, outC, kh, kw]
Tensor4 init_convt_weight(int in_c, int out_c, int kh, int kw, Rng& rng) {
  Tensor4 w(in_c, out_c, kh, kw);
  const double std = std::sqrt(2.0 / (static_cast<double>(in_c) * kh * kw));
  for (float& v : w.v) v = static_cast<float>(rng.normal() * std);
  return w;
}

ConvLayer make_conv(const std::string& name, int in_c, int out_c, int k,
                    int stride, int pad, Rng& rng) {
  ConvLayer l;
  l.w = make_leaf(init_conv_weight(out_c, in_c, k, k, rng), true, name + ".w");
  l.b = make_leaf(Tensor4(1, out_c, 1, 1), true, name + ".b");
  l.spec = {stride, pad};
  return l;
}

ConvTLayer make_convt(const std::string& name, int in_c, int out_c, int k,
                      int stride, int pad, int out_pad, Rng& rng) {
  ConvTLayer l;
  l.w = make_leaf(init_convt_weight(in_c, out_c, k, k, rng), true, name + ".w");
  l.b = make_leaf(Tensor4(1, out_c, 1, 1), true, name + ".b");
  l.spec = {stride, pad, out_pad};
  return l;
}

ResidualBlock make_residual(const std::string& name, ResidualKind kind,
                            int channels, Rng& rng) {
  ResidualBlock r;
  r.kind = kind;
  if (kind == ResidualKind::kBasic) {
    r.c1 = make_conv(name + ".c1", channels, channels, 3, 1, 0, rng);
    r.c2 = make_conv(name + ".c2", channels, channels, 3, 1, 0, rng);
  } else {
    const int mid = channels / 4;
    r.c1 = make_conv(name + ".c1", channels, mid, 1, 1, 0, rng);
    r.c2 = make_conv(name + ".c2", mid, mid, 3, 1, 0, rng);
    r.c3 = make_conv(name + ".c3", mid, channels, 1, 1, 0, rng);
  }
  return r;
}

void collect_conv(std::vector<NamedParam>& out, const ConvLayer& l) {
  if (l.w) out.push_back({l.w->name, l.w});
  if (l.b) out.push_back({l.b->name, l.b});
}

void collect_convt(std::vector<NamedParam>& out, const ConvTLayer& l) {
  if (l.w) out.push_back({l.w->name, l.w});
  if (l.b) out.push_back({l.b->name, l.b});
}

void collect_residual(std::vector<NamedParam>& out, const ResidualBlock& r) {
  collect_conv(out, r.c1);
  collect_conv(out, r.c2);
  if (r.kind == ResidualKind::kBottleneck) collect_conv(out, r.c3);
}

size_t count_params(const std::vector<NamedParam>& params) {
  size_t n = 0;
  for (const auto& p : params) n += p.node->value.size();
  return n;
}

}  // namespace

const char* residual_kind_name(ResidualKind k) {
  return k == ResidualKind::kBasic ? "basic" : "bottleneck";
}

ResidualKind residual_kind_from_name(const std::string& s) {
  if (s == "basic") return ResidualKind::kBasic;
  if (s == "bottleneck") return ResidualKind::kBottleneck;
  throw ConfigError("unknown residual kind: " + s);
}

const char* topology_name(Topology t) {
  return t == Topology::kOneToOne ? "one_to_one" : "many_to_many";
}

Topology topology_from_name(const std::string& s) {
  if (s == "one_to_one") return Topology::kOneToOne;
  if (s == "many_to_many") return Topology::kManyToMany;
  throw ConfigError("unknown topology: " + s);
}

NodeP ResidualBlock::forward(const NodeP& x) const {
  NodeP f;
  if (kind == ResidualKind::kBasic) {
    f = reflection_pad2d(x, 1);
    f = conv2d(f, c1.w, c1.b, c1.spec);
    f = instance_norm(f);
    f = relu(f);
    f = reflection_pad2d(f, 1);
    f = conv2d(f, c2.w, c2.b, c2.spec);
    f = instance_norm(f);
  } else {
    f = conv2d(x, c1.w, c1.b, c1.spec);
    f = instance_norm(f);
    f = relu(f);
    f = reflection_pad2d(f, 1);
    f = conv2d(f, c2.w, c2.b, c2.spec);
    f = instance_norm(f);
    f = relu(f);
    f = conv2d(f, c3.w, c3.b, c3.spec);
    f = instance_norm(f);
  }
  return add(x, f);
}

NodeP Encoder::forward(const NodeP& x) const {
  NodeP h = reflection_pad2d(x, 3);
  h = conv2d(h, c1.w, c1.b, c1.spec);
  h = leaky_relu(h, kLeakySlope);
  h = instance_norm(h);
  h = conv2d(h, c2.w, c2.b, c2.spec);
  h = leaky_relu(h, kLeakySlope);
  h = instance_norm(h);
  h = conv2d(h, c3.w, c3.b, c3.spec);
  h = leaky_relu(h, kLeakySlope);
  h = instance_norm(h);
  h = r1.forward(h);
  h = r2.forward(h);
  h = r3.forward(h);
  return h;
}

NodeP Discriminator::forward(const NodeP& x) const {
  NodeP h = conv2d(x, c1.w, c1.b, c1.spec);
  h = leaky_relu(h, kLeakySlope);
  h = conv2d(h, c2.w, c2.b, c2.spec);
  h = instance_norm(h);
  h = leaky_relu(h, kLeakySlope);
  h = conv2d(h, c3.w, c3.b, c3.spec);
  h = instance_norm(h);
  h = leaky_relu(h, kLeakySlope);
  h = conv2d(h, c4.w, c4.b, c4.spec);
  h = instance_norm(h);
  h = leaky_relu(h, kLeakySlope);
  h = conv2d(h, c5.w, c5.b, c5.spec);
  return h;
}

NodeP ModelBundle::encode(const NodeP& x) const {
  const Tensor4& v = x->value;
  if (v.c != 1 || v.h != kPatchSize || v.w != kPatchSize)
    throw ShapeError("encode: expected Nx1x128x128, got " + v.shape_str());
  return encoder.forward(x);
}

NodeP ModelBundle::decode(const NodeP& z, const std::string& domain) const {
  const Tensor4& v = z->value;
  if (v.c != kLatentChannels || v.h != kLatentSize || v.w != kLatentSize)
    throw ShapeError("decode: expected Nx128x16x16, got " + v.shape_str());
  const Decoder& dec = decoder(domain);
  NodeP h = shared_decoder_block.forward(z);
  h = dec.r2.forward(h);
  h = dec.r3.forward(h);
  h = conv_transpose2d(h, dec.t1.w, dec.t1.b, dec.t1.spec);
  h = leaky_relu(h, kLeakySlope);
  h = instance_norm(h);
  h = conv_transpose2d(h, dec.t2.w, dec.t2.b, dec.t2.spec);
  h = leaky_relu(h, kLeakySlope);
  h = instance_norm(h);
  h = conv_transpose2d(h, dec.t3.w, dec.t3.b, dec.t3.spec);
  return tanh01(h);
}

NodeP ModelBundle::discriminate(const NodeP& x, const std::string& domain) const {
  const Tensor4& v = x->value;
  if (v.c != 1 || v.h != kPatchSize || v.w != kPatchSize)
    throw ShapeError("discriminate: expected Nx1x128x128, got " + v.shape_str());
  return discriminator(domain).forward(x);
}

Tensor4 ModelBundle::encode_value(const Tensor4& x) const {
  return encode(make_leaf(x))->value;
}

Tensor4 ModelBundle::decode_value(const Tensor4& z,
                                  const std::string& domain) const {
  return decode(make_leaf(z), domain)->value;
}

const Decoder& ModelBundle::decoder(const std::string& domain) const {
  auto it = decoders.find(domain);
  if (it == decoders.end()) throw UnknownDomain("no decoder for domain: " + domain);
  return it->second;
}

const Discriminator& ModelBundle::discriminator(const std::string& domain) const {
  auto it = discriminators.find(domain);
  if (it == discriminators.end())
    throw UnknownDomain("no discriminator for domain: " + domain);
  return it->second;
}

std::vector<NamedParam> ModelBundle::generator_params() const {
  std::vector<NamedParam> out;
  collect_conv(out, encoder.c1);
  collect_conv(out, encoder.c2);
  collect_conv(out, encoder.c3);
  collect_residual(out, encoder.r1);
  collect_residual(out, encoder.r2);
  collect_residual(out, encoder.r3);
  collect_residual(out, shared_decoder_block);
  for (const auto& d : domains) {
    const Decoder& dec = decoder(d);
    collect_residual(out, dec.r2);
    collect_residual(out, dec.r3);
    collect_convt(out, dec.t1);
    collect_convt(out, dec.t2);
    collect_convt(out, dec.t3);
  }
  return out;
}

std::vector<NamedParam> ModelBundle::discriminator_params() const {
  std::vector<NamedParam> out;
  for (const auto& d : domains) {
    const Discriminator& disc = discriminator(d);
    collect_conv(out, disc.c1);
    collect_conv(out, disc.c2);
    collect_conv(out, disc.c3);
    collect_conv(out, disc.c4);
    collect_conv(out, disc.c5);
  }
  return out;
}

std::vector<NamedParam> ModelBundle::all_params() const {
  std::vector<NamedParam> out = generator_params();
  auto disc = discriminator_params();
  out.insert(out.end(), disc.begin(), disc.end());
  return out;
}

std::map<std::string, size_t> ModelBundle::param_count_report() const {
  std::map<std::string, size_t> report;
  {
    std::vector<NamedParam> p;
    collect_conv(p, encoder.c1);
    collect_conv(p, encoder.c2);
    collect_conv(p, encoder.c3);
    collect_residual(p, encoder.r1);
    collect_residual(p, encoder.r2);
    collect_residual(p, encoder.r3);
    report["encoder"] = count_params(p);
  }
  {
    std::vector<NamedParam> p;
    collect_residual(p, shared_decoder_block);
    report["shared_decoder_block"] = count_params(p);
  }
  for (const auto& d : domains) {
    std::vector<NamedParam> p;
    const Decoder& dec = decoder(d);
    collect_residual(p, dec.r2);
    collect_residual(p, dec.r3);
    collect_convt(p, dec.t1);
    collect_convt(p, dec.t2);
    collect_convt(p, dec.t3);
    report["decoder." + d] = count_params(p);
    std::vector<NamedParam> q;
    const Discriminator& disc = discriminator(d);
    collect_conv(q, disc.c1);
    collect_conv(q, disc.c2);
    collect_conv(q, disc.c3);
    collect_conv(q, disc.c4);
    collect_conv(q, disc.c5);
    report["discriminator." + d] = count_params(q);
  }
  size_t total = 0;
  for (const auto& [k, v] : report) total += v;
  report["total"] = total;
  return report;
}

NodeP reparameterize(const NodeP& mu, Rng& rng, bool deterministic) {
  if (deterministic) return mu;
  Tensor4 noise(mu->value.n, mu->value.c, mu->value.h, mu->value.w);
  for (float& v : noise.v) v = static_cast<float>(rng.normal());
  return add_noise(mu, std::move(noise));
}

ModelBundle build_model(const std::vector<std::string>& domains,
                        const VariantFlags& variant, uint64_t seed) {
  if (domains.size() < 2)
    throw ConfigError("build_model: at least 2 domains required");
  std::set<std::string> unique(domains.begin(), domains.end());
  if (unique.size() != domains.size())
    throw ConfigError("build_model: duplicate domain names");

  Rng rng(seed);
  ModelBundle m;
  m.variant = variant;
  m.seed = seed;
  m.domains = domains;

  m.encoder.c1 = make_conv("encoder.c1", 1, 32, 7, 2, 0, rng);
  m.encoder.c2 = make_conv("encoder.c2", 32, 64, 4, 2, 1, rng);
  m.encoder.c3 = make_conv("encoder.c3", 64, 128, 4, 2, 1, rng);
  m.encoder.r1 = make_residual("encoder.r1", variant.residual_kind, 128, rng);
  m.encoder.r2 = make_residual("encoder.r2", variant.residual_kind, 128, rng);
  m.encoder.r3 = make_residual("encoder.r3", variant.residual_kind, 128, rng);
  m.shared_decoder_block =
      make_residual("shared_decoder.r1", variant.residual_kind, 128, rng);

  for (const auto& d : domains) {
    Decoder dec;
    dec.r2 = make_residual("decoder." + d + ".r2", variant.residual_kind, 128, rng);
    dec.r3 = make_residual("decoder." + d + ".r3", variant.residual_kind, 128, rng);
    dec.t1 = make_convt("decoder." + d + ".t1", 128, 64, 4, 2, 1, 0, rng);
    dec.t2 = make_convt("decoder." + d + ".t2", 64, 32, 4, 2, 1, 0, rng);
    dec.t3 = make_convt("decoder." + d + ".t3", 32, 1, 7, 2, 3, 1, rng);
    m.decoders[d] = std::move(dec);

    Discriminator disc;
    disc.c1 = make_conv("discriminator." + d + ".c1", 1, 64, 4, 2, 1, rng);
    disc.c2 = make_conv("discriminator." + d + ".c2", 64, 128, 4, 2, 1, rng);
    disc.c3 = make_conv("discriminator." + d + ".c3", 128, 256, 4, 2, 1, rng);
    disc.c4 = make_conv("discriminator." + d + ".c4", 256, 512, 4, 2, 1, rng);
    disc.c5 = make_conv("discriminator." + d + ".c5", 512, 1, 3, 2, 1, rng);
    m.discriminators[d] = std::move(disc);
  }
  return m;
}

}  // namespace timbre
