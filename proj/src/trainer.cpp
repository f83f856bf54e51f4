#include "timbre/trainer.hpp"

#include <zlib.h>

#include <bit>
#include <cinttypes>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>

#include "timbre/audio.hpp"
#include "timbre/graph.hpp"

#include "json.hpp"

namespace timbre {

using nlohmann::json;

const char* vae_recon_path_name(VaeReconPath p) {
  return p == VaeReconPath::kSelf ? "self" : "inverse";
}

VaeReconPath vae_recon_path_from_name(const std::string& s) {
  if (s == "self") return VaeReconPath::kSelf;
  if (s == "inverse") return VaeReconPath::kInverse;
  throw ConfigError("unknown vae_recon_path: " + s);
}

void TrainConfig::validate() const {
  if (domains.size() < 2) throw ConfigError("need at least two domains");
  if (epochs < 1) throw ConfigError("epochs must be >= 1");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (checkpoint_every < 1) throw ConfigError("checkpoint_every must be >= 1");
  if (steps_per_epoch < 0) throw ConfigError("steps_per_epoch must be >= 0");
  AdamState probe;
  probe.alpha = alpha;
  probe.beta1 = beta1;
  probe.beta2 = beta2;
  probe.epsilon = epsilon;
  probe.validate();
  if (variant.topology == Topology::kOneToOne && domains.size() != 2)
    throw ConfigError("one_to_one topology requires exactly two domains");
}

TrainConfig train_config_from_json_text(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw ConfigError("config root must be a JSON object");

  TrainConfig cfg;
  for (const auto& [key, val] : j.items()) {
    try {
      if (key == "domains")
        cfg.domains = val.get<std::vector<std::string>>();
      else if (key == "epochs")
        cfg.epochs = val.get<int>();
      else if (key == "batch_size")
        cfg.batch_size = val.get<int>();
      else if (key == "lambda0")
        cfg.weights.lambda0 = val.get<float>();
      else if (key == "lambda1")
        cfg.weights.lambda1 = val.get<float>();
      else if (key == "lambda2")
        cfg.weights.lambda2 = val.get<float>();
      else if (key == "lambda3")
        cfg.weights.lambda3 = val.get<float>();
      else if (key == "lambda4")
        cfg.weights.lambda4 = val.get<float>();
      else if (key == "lambda5")
        cfg.weights.lambda5 = val.get<float>();
      else if (key == "alpha")
        cfg.alpha = val.get<double>();
      else if (key == "beta1")
        cfg.beta1 = val.get<double>();
      else if (key == "beta2")
        cfg.beta2 = val.get<double>();
      else if (key == "epsilon")
        cfg.epsilon = val.get<double>();
      else if (key == "residual_kind")
        cfg.variant.residual_kind =
            residual_kind_from_name(val.get<std::string>());
      else if (key == "cyclic_kld")
        cfg.variant.cyclic_kld = val.get<bool>();
      else if (key == "topology")
        cfg.variant.topology = topology_from_name(val.get<std::string>());
      else if (key == "vae_recon_path")
        cfg.vae_recon_path = vae_recon_path_from_name(val.get<std::string>());
      else if (key == "seed")
        cfg.seed = val.get<uint64_t>();
      else if (key == "checkpoint_every")
        cfg.checkpoint_every = val.get<int>();
      else if (key == "steps_per_epoch")
        cfg.steps_per_epoch = val.get<int>();
      else if (key == "manifest")
        cfg.manifest = val.get<std::string>();
      else if (key == "out_dir")
        cfg.out_dir = val.get<std::string>();
      else
        throw ConfigError("unknown config key: " + key);
    } catch (const json::exception& e) {
      throw ConfigError("config key '" + key + "': " + e.what());
    }
  }
  cfg.validate();
  return cfg;
}

TrainConfig train_config_from_json_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open config: " + path);
  std::string text((std::istreambuf_iterator<char>(in)),
                   std::istreambuf_iterator<char>());
  return train_config_from_json_text(text);
}

std::string train_config_to_json(const TrainConfig& cfg) {
  json j;
  j["domains"] = cfg.domains;
  j["epochs"] = cfg.epochs;
  j["batch_size"] = cfg.batch_size;
  j["lambda0"] = cfg.weights.lambda0;
  j["lambda1"] = cfg.weights.lambda1;
  j["lambda2"] = cfg.weights.lambda2;
  j["lambda3"] = cfg.weights.lambda3;
  j["lambda4"] = cfg.weights.lambda4;
  j["lambda5"] = cfg.weights.lambda5;
  j["alpha"] = cfg.alpha;
  j["beta1"] = cfg.beta1;
  j["beta2"] = cfg.beta2;
  j["epsilon"] = cfg.epsilon;
  j["residual_kind"] = residual_kind_name(cfg.variant.residual_kind);
  j["cyclic_kld"] = cfg.variant.cyclic_kld;
  j["topology"] = topology_name(cfg.variant.topology);
  j["vae_recon_path"] = vae_recon_path_name(cfg.vae_recon_path);
  j["seed"] = cfg.seed;
  j["checkpoint_every"] = cfg.checkpoint_every;
  j["steps_per_epoch"] = cfg.steps_per_epoch;
  j["manifest"] = cfg.manifest;
  j["out_dir"] = cfg.out_dir;
  return j.dump(2);
}

ExcerptDataset ExcerptDataset::from_manifest(const DatasetManifest& manifest,
                                             Split split,
                                             const StftConfig& cfg) {
  ExcerptDataset out;
  for (const auto& dom : manifest.domains) {
    auto& grids = out.domains[dom.name];
    for (const auto& path : dom.paths_for(split)) {
      AudioClip clip = read_wav(path);
      clip = resample(clip, kPipelineSampleRate);
      grids.push_back(mel_spectrogram(clip, cfg).values);
    }
  }
  return out;
}

ExcerptBatch sample_batch(const ExcerptDataset& data, const std::string& domain,
                          int batch_size, Rng& rng) {
  auto it = data.domains.find(domain);
  if (it == data.domains.end()) throw UnknownDomain("no such domain: " + domain);
  const auto& grids = it->second;

  bool any_usable = false;
  for (const auto& g : grids)
    if (g.rows >= kPatchSize) {
      any_usable = true;
      break;
    }
  if (!any_usable)
    throw InsufficientData("domain '" + domain + "' has no recording with " +
                           std::to_string(kPatchSize) + "+ frames");

  ExcerptBatch batch;
  batch.domain = domain;
  batch.patches = Tensor4(batch_size, 1, kPatchSize, kPatchSize);
  for (int b = 0; b < batch_size; ++b) {
    int rec, start;
    for (;;) {
      rec = static_cast<int>(rng.uniform_int(grids.size()));
      if (grids[rec].rows < kPatchSize) continue;  // redraw short recordings
      start = static_cast<int>(rng.uniform_int(grids[rec].rows - kPatchSize + 1));
      break;
    }
    const Grid& g = grids[rec];
    for (int f = 0; f < kPatchSize; ++f)
      for (int m = 0; m < kPatchSize; ++m)
        batch.patches.at(b, 0, m, f) = g.at(start + f, m);
    batch.origins.emplace_back(rec, start);
  }
  return batch;
}

// ---- checkpoint serialization ----

namespace {

constexpr char kMagic[4] = {'T', 'F', 'C', 'K'};
constexpr uint32_t kVersion = 1;

void append_u32(std::string& buf, uint32_t v) {
  char b[4] = {static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff),
               static_cast<char>((v >> 16) & 0xff),
               static_cast<char>((v >> 24) & 0xff)};
  buf.append(b, 4);
}

uint32_t read_u32(const std::string& buf, size_t off) {
  return static_cast<uint32_t>(static_cast<unsigned char>(buf[off])) |
         (static_cast<uint32_t>(static_cast<unsigned char>(buf[off + 1])) << 8) |
         (static_cast<uint32_t>(static_cast<unsigned char>(buf[off + 2]))
          << 16) |
         (static_cast<uint32_t>(static_cast<unsigned char>(buf[off + 3]))
          << 24);
}

void append_f32s(std::string& buf, const std::vector<float>& v) {
  static_assert(std::endian::native == std::endian::little);
  buf.append(reinterpret_cast<const char*>(v.data()), v.size() * 4);
}

}  // namespace

void save_checkpoint(const ModelBundle& bundle,
                     const std::map<std::string, AdamState>& opt_states,
                     int next_epoch, const std::string& path) {
  auto params = bundle.all_params();

  json header;
  header["domains"] = bundle.domains;
  header["residual_kind"] = residual_kind_name(bundle.variant.residual_kind);
  header["cyclic_kld"] = bundle.variant.cyclic_kld;
  header["topology"] = topology_name(bundle.variant.topology);
  header["seed"] = bundle.seed;
  header["next_epoch"] = next_epoch;

  json dir = json::array();
  json opt = json::array();
  std::string payload;
  auto add_tensor = [&](const std::string& name, const Tensor4& t,
                        const std::vector<float>& data) {
    json e;
    e["name"] = name;
    e["shape"] = {t.n, t.c, t.h, t.w};
    e["offset"] = payload.size();
    e["count"] = data.size();
    dir.push_back(e);
    append_f32s(payload, data);
  };
  for (const auto& p : params) {
    add_tensor(p.name, p.node->value, p.node->value.v);
    auto it = opt_states.find(p.name);
    size_t count = p.node->value.v.size();
    std::vector<float> zeros;
    const std::vector<float>* m = &zeros;
    const std::vector<float>* s = &zeros;
    int64_t steps = 0;
    if (it != opt_states.end() && !it->second.first_moment.empty()) {
      m = &it->second.first_moment;
      s = &it->second.second_moment;
      steps = it->second.step_count;
    } else {
      zeros.assign(count, 0.0f);
    }
    add_tensor("adam." + p.name + ".m", p.node->value, *m);
    add_tensor("adam." + p.name + ".v", p.node->value, *s);
    json st;
    st["name"] = p.name;
    st["step_count"] = steps;
    opt.push_back(st);
  }
  header["tensors"] = dir;
  header["opt"] = opt;

  std::string head = header.dump();
  std::string buf;
  buf.append(kMagic, 4);
  append_u32(buf, kVersion);
  append_u32(buf, static_cast<uint32_t>(head.size()));
  buf += head;
  buf += payload;
  uint32_t crc = static_cast<uint32_t>(
      crc32(0, reinterpret_cast<const Bytef*>(buf.data()), buf.size()));
  append_u32(buf, crc);

  std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write checkpoint: " + path);
    out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (!out) throw IoError("short write: " + path);
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint: " + path);
  std::string buf((std::istreambuf_iterator<char>(in)),
                  std::istreambuf_iterator<char>());

  if (buf.size() < 16 || std::memcmp(buf.data(), kMagic, 4) != 0)
    throw FormatError("not a checkpoint file: " + path);
  uint32_t version = read_u32(buf, 4);
  if (version != kVersion)
    throw VersionError("checkpoint version " + std::to_string(version) +
                       ", expected " + std::to_string(kVersion));
  uint32_t head_len = read_u32(buf, 8);
  if (12 + static_cast<size_t>(head_len) + 4 > buf.size())
    throw ChecksumError("truncated checkpoint: " + path);

  uint32_t stored_crc = read_u32(buf, buf.size() - 4);
  uint32_t crc = static_cast<uint32_t>(crc32(
      0, reinterpret_cast<const Bytef*>(buf.data()), buf.size() - 4));
  if (crc != stored_crc)
    throw ChecksumError("checkpoint CRC mismatch: " + path);

  json header;
  try {
    header = json::parse(buf.substr(12, head_len));
  } catch (const json::exception& e) {
    throw FormatError(std::string("bad checkpoint header: ") + e.what());
  }

  Checkpoint ck;
  VariantFlags variant;
  variant.residual_kind =
      residual_kind_from_name(header.at("residual_kind").get<std::string>());
  variant.cyclic_kld = header.at("cyclic_kld").get<bool>();
  variant.topology = topology_from_name(header.at("topology").get<std::string>());
  auto domains = header.at("domains").get<std::vector<std::string>>();
  uint64_t seed = header.at("seed").get<uint64_t>();
  ck.bundle = build_model(domains, variant, seed);
  ck.next_epoch = header.at("next_epoch").get<int>();

  std::map<std::string, NodeP> by_name;
  for (const auto& p : ck.bundle.all_params()) by_name[p.name] = p.node;

  size_t payload_off = 12 + head_len;
  size_t payload_len = buf.size() - payload_off - 4;
  auto read_tensor = [&](const json& e, std::vector<float>& out) {
    size_t off = e.at("offset").get<size_t>();
    size_t count = e.at("count").get<size_t>();
    if (off + count * 4 > payload_len)
      throw ChecksumError("checkpoint tensor past end of payload");
    out.resize(count);
    std::memcpy(out.data(), buf.data() + payload_off + off, count * 4);
  };

  for (const auto& e : header.at("tensors")) {
    std::string name = e.at("name").get<std::string>();
    std::string base = name;
    int field = 0;  // 0 = param, 1 = first moment, 2 = second moment
    if (name.rfind("adam.", 0) == 0) {
      if (name.size() > 7 && name.compare(name.size() - 2, 2, ".m") == 0)
        field = 1;
      else if (name.size() > 7 && name.compare(name.size() - 2, 2, ".v") == 0)
        field = 2;
      else
        throw FormatError("bad optimizer tensor name: " + name);
      base = name.substr(5, name.size() - 7);
    }
    auto it = by_name.find(base);
    if (it == by_name.end())
      throw ConfigError("checkpoint tensor '" + name +
                        "' has no matching parameter");
    if (field == 0) {
      auto shape = e.at("shape").get<std::vector<int>>();
      const Tensor4& t = it->second->value;
      if (shape != std::vector<int>{t.n, t.c, t.h, t.w})
        throw ConfigError("shape mismatch for parameter '" + name + "'");
      read_tensor(e, it->second->value.v);
    } else {
      AdamState& st = ck.opt_states[base];
      read_tensor(e, field == 1 ? st.first_moment : st.second_moment);
    }
  }
  for (const auto& st : header.at("opt")) {
    std::string name = st.at("name").get<std::string>();
    ck.opt_states[name].step_count = st.at("step_count").get<int64_t>();
  }
  return ck;
}

// ---- trainer ----

Trainer::Trainer(TrainConfig cfg, ExcerptDataset data)
    : cfg_(std::move(cfg)), data_(std::move(data)) {
  cfg_.validate();
  bundle_ = build_model(cfg_.domains, cfg_.variant, cfg_.seed);
}

Trainer::Trainer(TrainConfig cfg, ExcerptDataset data,
                 const std::string& checkpoint)
    : cfg_(std::move(cfg)), data_(std::move(data)) {
  cfg_.validate();
  Checkpoint ck = load_checkpoint(checkpoint);
  if (ck.bundle.variant.residual_kind != cfg_.variant.residual_kind ||
      ck.bundle.variant.cyclic_kld != cfg_.variant.cyclic_kld ||
      ck.bundle.variant.topology != cfg_.variant.topology)
    throw ConfigError("checkpoint variant flags do not match the config");
  if (ck.bundle.domains != cfg_.domains)
    throw ConfigError("checkpoint domains do not match the config");
  bundle_ = std::move(ck.bundle);
  opt_states_ = std::move(ck.opt_states);
  for (auto& [name, st] : opt_states_) {
    st.alpha = cfg_.alpha;
    st.beta1 = cfg_.beta1;
    st.beta2 = cfg_.beta2;
    st.epsilon = cfg_.epsilon;
  }
  start_epoch_ = ck.next_epoch;
}

std::vector<std::pair<std::string, std::string>> Trainer::training_pairs()
    const {
  std::vector<std::pair<std::string, std::string>> pairs;
  if (cfg_.variant.topology == Topology::kOneToOne) {
    pairs.emplace_back(cfg_.domains[0], cfg_.domains[1]);
  } else {
    for (size_t i = 0; i < cfg_.domains.size(); ++i)
      for (size_t j = i + 1; j < cfg_.domains.size(); ++j)
        pairs.emplace_back(cfg_.domains[i], cfg_.domains[j]);
  }
  return pairs;
}

int Trainer::steps_per_epoch() const {
  if (cfg_.steps_per_epoch > 0) return cfg_.steps_per_epoch;
  size_t total = 0;
  for (const auto& name : cfg_.domains) {
    auto it = data_.domains.find(name);
    if (it == data_.domains.end())
      throw UnknownDomain("no data for domain: " + name);
    total += it->second.size();
  }
  size_t denom = cfg_.domains.size() * static_cast<size_t>(cfg_.batch_size);
  return static_cast<int>((total + denom - 1) / denom);
}

void Trainer::adam_update(const std::vector<NamedParam>& params, double lr) {
  for (const auto& p : params) {
    if (p.node->grad.v.empty()) continue;
    auto [it, inserted] = opt_states_.try_emplace(p.name);
    AdamState& st = it->second;
    if (inserted) {
      st.beta1 = cfg_.beta1;
      st.beta2 = cfg_.beta2;
      st.epsilon = cfg_.epsilon;
    }
    st.alpha = lr;
    adam_step(p.node->value.v, p.node->grad.v, st, p.name);
  }
}

LossReport Trainer::pair_step(const ExcerptBatch& batch_a,
                              const ExcerptBatch& batch_b, double lr,
                              Rng& rng) {
  const std::string& dom_a = batch_a.domain;
  const std::string& dom_b = batch_b.domain;
  bool self = cfg_.vae_recon_path == VaeReconPath::kSelf;
  bool kld = cfg_.variant.cyclic_kld;
  const LossWeights& w = cfg_.weights;

  NodeP x_a = make_leaf(batch_a.patches, false, "x_" + dom_a);
  NodeP x_b = make_leaf(batch_b.patches, false, "x_" + dom_b);

  NodeP mu_a = bundle_.encode(x_a);
  NodeP mu_b = bundle_.encode(x_b);
  NodeP z_a = reparameterize(mu_a, rng);
  NodeP z_b = reparameterize(mu_b, rng);

  NodeP fake_b = bundle_.decode(z_a, dom_b);
  NodeP fake_a = bundle_.decode(z_b, dom_a);
  NodeP rec_a = self ? bundle_.decode(z_a, dom_a) : fake_b;
  NodeP rec_b = self ? bundle_.decode(z_b, dom_b) : fake_a;

  NodeP mu_cc_a = bundle_.encode(fake_b);
  NodeP mu_cc_b = bundle_.encode(fake_a);
  NodeP z_cc_a = reparameterize(mu_cc_a, rng);
  NodeP z_cc_b = reparameterize(mu_cc_b, rng);
  NodeP cyc_a = bundle_.decode(z_cc_a, dom_a);
  NodeP cyc_b = bundle_.decode(z_cc_b, dom_b);

  NodeP s_fake_b = bundle_.discriminate(fake_b, dom_b);
  NodeP s_fake_a = bundle_.discriminate(fake_a, dom_a);
  NodeP s_real_b = bundle_.discriminate(x_b, dom_b);
  NodeP s_real_a = bundle_.discriminate(x_a, dom_a);

  NodeP gan_g = weighted_sum(
      {{1.0f, adversarial_loss_g(s_fake_b)}, {1.0f, adversarial_loss_g(s_fake_a)}});
  NodeP gan_d = weighted_sum({{1.0f, adversarial_loss_d(s_real_b, s_fake_b)},
                              {1.0f, adversarial_loss_d(s_real_a, s_fake_a)}});
  NodeP kl = weighted_sum({{1.0f, kl_loss(mu_a)}, {1.0f, kl_loss(mu_b)}});
  NodeP rec = weighted_sum(
      {{1.0f, recon_l1(x_a, rec_a)}, {1.0f, recon_l1(x_b, rec_b)}});
  NodeP cc_kl =
      weighted_sum({{1.0f, kl_loss(mu_cc_a)}, {1.0f, kl_loss(mu_cc_b)}});
  NodeP cc_rec = weighted_sum(
      {{1.0f, recon_l1(x_a, cyc_a)}, {1.0f, recon_l1(x_b, cyc_b)}});
  NodeP latent = l1_mean(mu_a, mu_b);

  std::vector<std::pair<float, NodeP>> g_terms = {{w.lambda0, gan_g},
                                                  {w.lambda1, kl},
                                                  {w.lambda2, rec},
                                                  {w.lambda4, cc_rec},
                                                  {w.lambda5, latent}};
  if (kld) g_terms.push_back({w.lambda3, cc_kl});
  NodeP total_g = weighted_sum(g_terms);
  NodeP total_d = weighted_sum({{w.lambda0, gan_d}});

  LossReport report = total_objective(
      gan_g->scalar(), gan_d->scalar(), kl->scalar(), rec->scalar(),
      cc_kl->scalar(), cc_rec->scalar(), latent->scalar(), w, kld);
  report.check_finite();

  auto gen_params = bundle_.generator_params();
  auto disc_params = bundle_.discriminator_params();
  for (const auto& p : gen_params) p.node->zero_grad();
  for (const auto& p : disc_params) p.node->zero_grad();

  backward(total_g);
  adam_update(gen_params, lr);

  for (const auto& p : gen_params) p.node->zero_grad();
  for (const auto& p : disc_params) p.node->zero_grad();
  backward(total_d, {fake_a, fake_b});

  disc_backward_clean_ = true;
  for (const auto& p : gen_params) {
    for (float g : p.node->grad.v)
      if (g != 0.0f) {
        disc_backward_clean_ = false;
        break;
      }
    if (!disc_backward_clean_) break;
  }
  adam_update(disc_params, lr);
  return report;
}

std::string Trainer::run() {
  std::filesystem::create_directories(cfg_.out_dir);
  std::string csv_path = cfg_.out_dir + "/losses.csv";
  std::ofstream csv;
  if (start_epoch_ > 0) {
    csv.open(csv_path, std::ios::app);
  } else {
    csv.open(csv_path, std::ios::trunc);
    csv << loss_csv_header() << "\n";
  }
  if (!csv) throw IoError("cannot write loss log: " + csv_path);

  Rng root(cfg_.seed);
  auto pairs = training_pairs();
  int steps = steps_per_epoch();
  char num[64];

  for (int epoch = start_epoch_; epoch < cfg_.epochs; ++epoch) {
    double lr = lr_schedule(epoch, cfg_.epochs, cfg_.alpha);
    for (int step = 0; step < steps; ++step) {
      for (size_t pi = 0; pi < pairs.size(); ++pi) {
        uint64_t stream = static_cast<uint64_t>(epoch) * 1000003ULL +
                          static_cast<uint64_t>(step) * 131ULL + pi;
        Rng rng = root.fork(stream);
        ExcerptBatch a =
            sample_batch(data_, pairs[pi].first, cfg_.batch_size, rng);
        ExcerptBatch b =
            sample_batch(data_, pairs[pi].second, cfg_.batch_size, rng);
        LossReport r = pair_step(a, b, lr, rng);

        int64_t global =
            (static_cast<int64_t>(epoch) * steps + step) * pairs.size() + pi;
        csv << global << "," << epoch << ","
            << pairs[pi].first << "-" << pairs[pi].second;
        for (double v : r.fields()) {
          std::snprintf(num, sizeof num, "%.9g", v);
          csv << "," << num;
        }
        std::snprintf(num, sizeof num, "%.9g", lr);
        csv << "," << num << "\n";
        csv.flush();
      }
    }
    bool last = epoch + 1 == cfg_.epochs;
    if ((epoch + 1) % cfg_.checkpoint_every == 0 || last) {
      std::string path =
          cfg_.out_dir + "/checkpoint_" + std::to_string(epoch + 1) + ".tfck";
      save_checkpoint(bundle_, opt_states_, epoch + 1, path);
    }
  }
  std::string final_path = cfg_.out_dir + "/model.tfck";
  save_checkpoint(bundle_, opt_states_, cfg_.epochs, final_path);
  return final_path;
}

}  // namespace timbre
