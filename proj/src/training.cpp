#include "freqsr/training.hpp"

#include <zlib.h>

#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <nlohmann/json.hpp>
#include <numbers>

#include "freqsr/errors.hpp"

namespace freqsr {
namespace fs = std::filesystem;

namespace {

constexpr char kCheckpointMagic[8] = {'F', 'Q', 'S', 'R', 'C', 'K', 'P', 'T'};

void require_finite(const torch::Tensor& t, const char* name) {
  if (!torch::isfinite(t.detach()).all().item<bool>()) {
    throw NumericError(std::string("non-finite loss term ") + name);
  }
}

std::string hex32(uint32_t v) {
  char buf[9];
  std::snprintf(buf, sizeof buf, "%08x", v);
  return buf;
}

uint32_t crc_bytes(const std::vector<float>& payload) {
  uLong crc = crc32(0L, Z_NULL, 0);
  const auto* bytes = reinterpret_cast<const Bytef*>(payload.data());
  std::size_t remaining = payload.size() * sizeof(float);
  while (remaining > 0) {
    const auto chunk = static_cast<uInt>(std::min<std::size_t>(remaining, 1u << 30));
    crc = crc32(crc, bytes, chunk);
    bytes += chunk;
    remaining -= chunk;
  }
  return static_cast<uint32_t>(crc);
}

torch::Tensor to_storage(const torch::Tensor& t) {
  return t.detach().to(torch::kCPU, torch::kFloat32).contiguous().clone();
}

}  // namespace

torch::Tensor l_dct(const torch::Tensor& filters, double lambda, double mu) {
  if (filters.dim() != 4 || filters.size(0) != kNumCoeffs) {
    throw DimensionError("l_dct expects [64, 1, 8, 8] filters");
  }
  const auto gram = basis_gram(filters);
  const auto off_diagonal = gram - torch::diag(torch::diag(gram));
  const auto orthogonality = 0.5 * off_diagonal.pow(2).sum();
  const auto reference = basis_variance(make_dct_basis(filters.scalar_type()).filters);
  const auto variance = 0.5 * (basis_variance(filters) - reference).pow(2).sum();
  return lambda * orthogonality + mu * variance;
}

torch::Tensor l_sfr(const torch::Tensor& sr, const torch::Tensor& hr) {
  if (sr.sizes() != hr.sizes()) throw DimensionError("l_sfr: SR and HR shapes differ");
  return 0.5 * (sr - hr).pow(2).mean();
}

LossBreakdown total_loss(const torch::Tensor& sfr, const torch::Tensor& dct, const torch::Tensor& sfd,
                         double omega) {
  require_finite(sfr, "l_sfr");
  require_finite(dct, "l_dct");
  require_finite(sfd, "l_sfd");
  LossBreakdown out;
  out.omega = omega;
  out.total = sfr + dct + omega * sfd;
  require_finite(out.total, "l_total");
  out.l_sfr = sfr.item<double>();
  out.l_dct = dct.item<double>();
  out.l_sfd = sfd.item<double>();
  out.l_total = out.total.item<double>();
  return out;
}

double lr_schedule(int64_t step, int64_t total_steps, double base, double floor) {
  if (total_steps <= 0) throw RangeError("lr_schedule: total_steps must be positive");
  if (step < 0 || step > total_steps) throw RangeError("lr_schedule: step outside [0, total_steps]");
  const double progress = static_cast<double>(step) / static_cast<double>(total_steps);
  return floor + (base - floor) * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

StepLosses compute_losses(FreqSR& model, const BatchTensors& batch, const TrainConfig& config,
                          ActionMode mode, std::mt19937_64& rng) {
  StepLosses out;
  out.forward = model->forward(batch.lr, batch.scales, mode, rng);
  const auto& fr = out.forward;
  out.sfr = l_sfr(fr.sr, batch.hr);
  out.dct = l_dct(model->cdct_filters, config.lambda_orth, config.mu_var);
  out.rewards = patch_rewards(fr.sr, batch.hr);
  if (fr.policy.logits.defined()) {
    const int64_t blocks = fr.f_lr.coeffs.size(2) * fr.f_lr.coeffs.size(3);
    const auto block_rewards = out.rewards.repeat_interleave(blocks);
    const auto advantages = block_rewards - fr.policy.value.detach();
    out.sfd = sfd_loss(policy_loss(fr.policy.logits, fr.action_indices, advantages, config.model.sfd.beta),
                       value_loss(fr.policy.value, block_rewards));
  } else {
    out.sfd = torch::zeros({}, fr.sr.options());
  }
  return out;
}

void write_log_header(std::ostream& out) { out << "step,lr,l_sfr,l_dct,l_sfd,l_total,mean_action\n"; }

void write_log_row(std::ostream& out, const StepMetrics& m) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "%lld,%.9g,%.9g,%.9g,%.9g,%.9g,%.6f\n", static_cast<long long>(m.step), m.lr,
                m.losses.l_sfr, m.losses.l_dct, m.losses.l_sfd, m.losses.l_total, m.mean_action);
  out << buf;
}

Trainer::Trainer(TrainConfig config, DatasetManifest manifest)
    : config_(std::move(config)), sampler_(manifest, config_.seed * 2 + 1), action_rng_(config_.seed) {
  config_.validate();
  if (config_.train_scale != 0.0) sampler_.set_fixed_scale(config_.train_scale);
  torch::manual_seed(config_.seed);
  model_ = FreqSR(config_.model);
  if (config_.calibration_patches > 0) {
    PatchSampler calibration(std::move(manifest), config_.seed * 2 + 2);
    const auto batch = stack_batch(calibration.sample_batch(config_.calibration_patches), torch::kFloat32);
    model_->calibrate_spectral_scale(batch.lr);
  }
  optimizer_ = std::make_unique<torch::optim::Adam>(model_->parameters(),
                                                    torch::optim::AdamOptions(config_.lr));
}

StepMetrics Trainer::train_step(const BatchTensors& batch) {
  model_->train();
  const double lr = lr_schedule(std::min(step_, config_.steps), config_.steps, config_.lr, config_.lr_floor);
  for (auto& group : optimizer_->param_groups()) {
    static_cast<torch::optim::AdamOptions&>(group.options()).lr(lr);
  }
  auto losses = compute_losses(model_, batch, config_, ActionMode::kSample, action_rng_);
  auto breakdown = total_loss(losses.sfr, losses.dct, losses.sfd, config_.omega);
  breakdown.lambda = config_.lambda_orth;
  breakdown.mu = config_.mu_var;
  breakdown.beta = config_.model.sfd.beta;
  optimizer_->zero_grad();
  breakdown.total.backward();
  optimizer_->step();
  ++step_;

  StepMetrics m;
  m.step = step_;
  m.lr = lr;
  m.mean_action = losses.forward.vfp.to(torch::kFloat64).mean().item<double>();
  m.mean_reward = losses.rewards.mean().item<double>();
  breakdown.total = torch::Tensor();
  m.losses = breakdown;
  return m;
}

std::vector<StepMetrics> Trainer::run(std::ostream* log,
                                      const std::function<void(const StepMetrics&)>& on_step) {
  std::vector<StepMetrics> history;
  if (step_ >= config_.steps) return history;
  if (log) write_log_header(*log);
  BatchPrefetcher prefetcher(sampler_, config_.batch_size, static_cast<std::size_t>(config_.prefetch));
  while (step_ < config_.steps) {
    const auto batch = stack_batch(prefetcher.next(), torch::kFloat32);
    history.push_back(train_step(batch));
    const auto& m = history.back();
    if (log) write_log_row(*log, m);
    if (on_step) on_step(m);
    if (config_.checkpoint_every > 0 && !config_.checkpoint_path.empty() &&
        step_ % config_.checkpoint_every == 0 && step_ < config_.steps) {
      save(config_.checkpoint_path);
    }
  }
  if (log) log->flush();
  if (!config_.checkpoint_path.empty()) save(config_.checkpoint_path);
  return history;
}

void Trainer::save(const fs::path& path) const {
  save_checkpoint(path, const_cast<FreqSR&>(model_), optimizer_.get(), step_, config_);
}

void Trainer::restore(const fs::path& path) {
  const auto data = read_checkpoint(path);
  load_model_tensors(model_, data);
  auto& state = optimizer_->state();
  for (const auto& item : model_->named_parameters()) {
    const auto prefix = "adam/" + item.key() + "/";
    const auto avg = data.tensors.find(prefix + "exp_avg");
    const auto avg_sq = data.tensors.find(prefix + "exp_avg_sq");
    const auto count = data.tensors.find(prefix + "step");
    if (avg == data.tensors.end() || avg_sq == data.tensors.end() || count == data.tensors.end()) continue;
    const auto& p = item.value();
    auto s = std::make_unique<torch::optim::AdamParamState>();
    s->step(static_cast<int64_t>(count->second.item<float>()));
    s->exp_avg(avg->second.to(p.dtype()).clone());
    s->exp_avg_sq(avg_sq->second.to(p.dtype()).clone());
    state[p.unsafeGetTensorImpl()] = std::move(s);
  }
  step_ = data.step;
}

void write_checkpoint(const fs::path& path, const CheckpointData& data) {
  nlohmann::json tensors = nlohmann::json::array();
  std::vector<float> payload;
  for (const auto& [name, tensor] : data.tensors) {
    const auto t = to_storage(tensor);
    tensors.push_back({{"name", name}, {"shape", t.sizes().vec()}, {"offset", payload.size()}});
    const float* begin = t.data_ptr<float>();
    payload.insert(payload.end(), begin, begin + t.numel());
  }
  const nlohmann::json header = {{"format_version", data.format_version},
                                 {"step", data.step},
                                 {"config", config_to_json(data.config)},
                                 {"tensors", tensors},
                                 {"payload_floats", payload.size()},
                                 {"payload_crc32", hex32(crc_bytes(payload))}};
  const std::string text = header.dump();
  const uint64_t header_len = text.size();

  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write checkpoint '" + tmp.string() + "'");
    out.write(kCheckpointMagic, sizeof kCheckpointMagic);
    out.write(reinterpret_cast<const char*>(&header_len), sizeof header_len);
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    out.write(reinterpret_cast<const char*>(payload.data()),
              static_cast<std::streamsize>(payload.size() * sizeof(float)));
    out.flush();
    if (!out) throw IoError("failed writing checkpoint '" + tmp.string() + "'");
  }
  fs::rename(tmp, path);
}

CheckpointData read_checkpoint(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint '" + path.string() + "'");
  const auto file_size = fs::file_size(path);
  char magic[sizeof kCheckpointMagic];
  uint64_t header_len = 0;
  in.read(magic, sizeof magic);
  in.read(reinterpret_cast<char*>(&header_len), sizeof header_len);
  if (!in || std::memcmp(magic, kCheckpointMagic, sizeof magic) != 0) {
    throw FormatError("'" + path.string() + "' is not a checkpoint file");
  }
  if (header_len > file_size - sizeof magic - sizeof header_len) {
    throw FormatError("checkpoint header length exceeds file size");
  }
  std::string text(header_len, '\0');
  in.read(text.data(), static_cast<std::streamsize>(header_len));
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("corrupt checkpoint header: ") + e.what());
  }

  CheckpointData data;
  try {
    data.format_version = header.at("format_version");
    if (data.format_version != kCheckpointFormatVersion) {
      throw VersionError("checkpoint format version " + std::to_string(data.format_version) +
                         " is not supported (expected " + std::to_string(kCheckpointFormatVersion) + ")");
    }
    data.step = header.at("step");
    data.config = config_from_json(header.at("config"));
    const uint64_t floats = header.at("payload_floats");
    if (floats * sizeof(float) != file_size - sizeof magic - sizeof header_len - header_len) {
      throw FormatError("checkpoint payload is truncated or has trailing bytes");
    }
    std::vector<float> payload(floats);
    in.read(reinterpret_cast<char*>(payload.data()), static_cast<std::streamsize>(floats * sizeof(float)));
    if (!in) throw FormatError("checkpoint payload is truncated");
    if (hex32(crc_bytes(payload)) != header.at("payload_crc32").get<std::string>()) {
      throw FormatError("checkpoint payload checksum mismatch (corrupt file)");
    }
    for (const auto& entry : header.at("tensors")) {
      const std::vector<int64_t> shape = entry.at("shape");
      const uint64_t offset = entry.at("offset");
      int64_t numel = 1;
      for (const auto d : shape) numel *= d;
      if (offset + static_cast<uint64_t>(numel) > floats) throw FormatError("tensor extends past payload");
      data.tensors[entry.at("name").get<std::string>()] =
          torch::from_blob(payload.data() + offset, shape, torch::kFloat32).clone();
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("corrupt checkpoint header: ") + e.what());
  }
  return data;
}

CheckpointData make_checkpoint(FreqSR& model, const torch::optim::Adam* optimizer, int64_t step,
                               const TrainConfig& config) {
  CheckpointData data;
  data.step = step;
  data.config = config;
  for (const auto& item : model->named_parameters()) data.tensors["model/" + item.key()] = to_storage(item.value());
  for (const auto& item : model->named_buffers()) data.tensors["model/" + item.key()] = to_storage(item.value());
  if (optimizer) {
    const auto& state = optimizer->state();
    for (const auto& item : model->named_parameters()) {
      const auto it = state.find(item.value().unsafeGetTensorImpl());
      if (it == state.end()) continue;
      const auto& s = static_cast<const torch::optim::AdamParamState&>(*it->second);
      const auto prefix = "adam/" + item.key() + "/";
      data.tensors[prefix + "exp_avg"] = to_storage(s.exp_avg());
      data.tensors[prefix + "exp_avg_sq"] = to_storage(s.exp_avg_sq());
      data.tensors[prefix + "step"] = torch::full({1}, static_cast<float>(s.step()));
    }
  }
  return data;
}

void save_checkpoint(const fs::path& path, FreqSR& model, const torch::optim::Adam* optimizer, int64_t step,
                     const TrainConfig& config) {
  write_checkpoint(path, make_checkpoint(model, optimizer, step, config));
}

void load_model_tensors(FreqSR& model, const CheckpointData& data) {
  torch::NoGradGuard no_grad;
  auto assign = [&](const std::string& name, torch::Tensor& target) {
    const auto it = data.tensors.find("model/" + name);
    if (it == data.tensors.end()) throw FormatError("checkpoint is missing tensor '" + name + "'");
    if (it->second.sizes() != target.sizes()) {
      throw FormatError("checkpoint tensor '" + name + "' has an incompatible shape");
    }
    target.copy_(it->second.to(target.dtype()));
  };
  for (auto& item : model->named_parameters()) assign(item.key(), item.value());
  for (auto& item : model->named_buffers()) assign(item.key(), item.value());
}

LoadedModel load_checkpoint(const fs::path& path) {
  if (!fs::exists(path)) throw IoError("checkpoint '" + path.string() + "' does not exist");
  const auto data = read_checkpoint(path);
  LoadedModel out;
  out.config = data.config;
  out.step = data.step;
  out.model = FreqSR(data.config.model);
  load_model_tensors(out.model, data);
  out.model->eval();
  return out;
}

}  // namespace freqsr
