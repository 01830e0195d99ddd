/*
 * Copyright 2026 The FD-VAE Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include "fdvae/config.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "fdvae/digest.hpp"
#include "fdvae/error.hpp"

namespace fdvae::exp {

using nlohmann::json;

namespace {

const std::pair<Variant, const char*> kVariants[] = {
    {Variant::kFdVae, "fdvae"},
    {Variant::kVae, "vae"},
    {Variant::kBetaVae, "beta_vae"},
    {Variant::kFactorVae, "factor_vae"},
    {Variant::kFfVaeApprox, "ffvae_approx"},
};

const std::pair<DownstreamInput, const char*> kInputs[] = {
    {DownstreamInput::kFull, "full"},
    {DownstreamInput::kZtOnly, "zt_only"},
    {DownstreamInput::kZtPlusRawZm, "zt_plus_raw_zm"},
    {DownstreamInput::kZtPlusTransformedZm, "zt_plus_transformed_zm"},
    {DownstreamInput::kSensitiveOnly, "sensitive_only"},
    {DownstreamInput::kNonsensitiveOnly, "nonsensitive_only"},
    {DownstreamInput::kLatentRemovalK1, "latent_removal_k1"},
    {DownstreamInput::kLatentRemovalK2, "latent_removal_k2"},
};

// Rejects keys outside `allowed` so typos never pass silently.
void RequireKeys(const json& j, const std::string& where,
                 std::initializer_list<const char*> allowed) {
  if (!j.is_object()) {
    throw ConfigError("InvalidConfig", where + " must be an object");
  }
  for (const auto& [key, _] : j.items()) {
    if (std::none_of(allowed.begin(), allowed.end(),
                     [&](const char* a) { return key == a; })) {
      throw ConfigError("UnknownKey", "unknown config key '" +
                                          (where.empty() ? key : where + "." + key) + "'");
    }
  }
}

template <typename T>
void Read(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace

std::string ToString(Variant v) {
  for (const auto& [value, name] : kVariants) {
    if (value == v) return name;
  }
  return "?";
}

std::string ToString(DownstreamInput d) {
  for (const auto& [value, name] : kInputs) {
    if (value == d) return name;
  }
  return "?";
}

Variant ParseVariant(const std::string& s) {
  for (const auto& [value, name] : kVariants) {
    if (s == name) return value;
  }
  throw ConfigError("UnknownVariant", "unknown variant '" + s + "'");
}

DownstreamInput ParseDownstreamInput(const std::string& s) {
  for (const auto& [value, name] : kInputs) {
    if (s == name) return value;
  }
  throw ConfigError("UnknownDownstreamInput", "unknown downstream_input '" + s + "'");
}

Ablation DefaultAblation(Variant v) {
  switch (v) {
    case Variant::kFdVae:
      return {true, true, true, DownstreamInput::kZtPlusTransformedZm};
    case Variant::kVae:
    case Variant::kBetaVae:
    case Variant::kFactorVae:
      return {false, false, false, DownstreamInput::kFull};
    case Variant::kFfVaeApprox:
      return {false, false, false, DownstreamInput::kNonsensitiveOnly};
  }
  return {};
}

std::string DatasetSection::id() const {
  if (kind == Kind::kSynthetic) {
    std::ostringstream out;
    out << "synthetic(skew=" << synthetic.skew << ",seed=" << synthetic.seed << ")";
    return out.str();
  }
  return pair.id();
}

void ExperimentConfig::Validate() const {
  weights.Validate();
  const auto& s = schedule;
  if (s.repr_epochs < 1 || s.downstream_epochs < 1 || s.adversary_steps < 1) {
    throw ConfigError("InvalidSchedule", "epochs and adversary_steps must be >= 1");
  }
  if (!(s.repr_lr > 0) || !(s.downstream_lr > 0) || !(s.adversary_lr_scale > 0) ||
      !std::isfinite(s.repr_lr) || !std::isfinite(s.downstream_lr) ||
      !std::isfinite(s.adversary_lr_scale)) {
    throw ConfigError("InvalidSchedule", "learning rates must be finite and > 0");
  }
  if (s.batch_size < 2) {
    throw ConfigError("InvalidSchedule",
                      "schedule.batch_size must be >= 2 (subspace shuffling "
                      "needs two samples); got " + std::to_string(s.batch_size));
  }
  if (s.optimizer != "adam") {
    throw ConfigError("InvalidSchedule", "only the adam optimizer is supported");
  }
  if (!(s.beta1 >= 0 && s.beta1 < 1) || !(s.beta2 >= 0 && s.beta2 < 1)) {
    throw ConfigError("InvalidSchedule", "momentum coefficients must lie in [0,1)");
  }
  if (seeds.empty()) throw ConfigError("InvalidConfig", "seeds must be non-empty");

  if (dataset.kind == DatasetSection::Kind::kSynthetic) {
    dataset.synthetic.Validate();
  } else {
    dataset.pair.Validate();
    if (dataset.root.empty()) throw ConfigError("InvalidConfig", "dataset.root is empty");
    if (dataset.composition) dataset.composition->Validate();
  }

  const auto& a = ablation;
  const auto input = a.downstream_input;
  auto inconsistent = [&](const std::string& why) {
    throw ConfigError("InconsistentConfig", ToString(variant) + ": " + why);
  };
  if (variant != Variant::kFdVae) {
    if (a.use_cls || a.use_adv) inconsistent("use_cls/use_adv apply to fdvae only");
    if (a.use_mal) inconsistent("use_mal applies to fdvae only");
  }
  switch (variant) {
    case Variant::kVae:
      if (input != DownstreamInput::kFull) inconsistent("downstream_input must be full");
      if (weights.kl_beta != 1.0) inconsistent("kl_beta must be 1 (use beta_vae)");
      break;
    case Variant::kBetaVae:
    case Variant::kFactorVae:
      if (input != DownstreamInput::kFull && input != DownstreamInput::kLatentRemovalK1 &&
          input != DownstreamInput::kLatentRemovalK2) {
        inconsistent("downstream_input must be full or latent_removal_k1/k2");
      }
      break;
    case Variant::kFfVaeApprox:
      if (input != DownstreamInput::kSensitiveOnly &&
          input != DownstreamInput::kNonsensitiveOnly) {
        inconsistent("downstream_input must be sensitive_only or nonsensitive_only");
      }
      break;
    case Variant::kFdVae:
      if (a.use_mal) {
        if (input != DownstreamInput::kZtOnly && input != DownstreamInput::kZtPlusRawZm &&
            input != DownstreamInput::kZtPlusTransformedZm) {
          inconsistent("downstream_input must be zt_only, zt_plus_raw_zm or "
                       "zt_plus_transformed_zm");
        }
      } else if (input != DownstreamInput::kZtOnly) {
        inconsistent("without a mutual subspace the downstream input must be zt_only");
      }
      break;
  }
}

std::string ExperimentConfig::variant_id() const {
  std::string id = ToString(variant);
  if (variant == Variant::kFdVae) {
    if (!ablation.use_cls) id += "-cls";
    if (!ablation.use_adv) id += "-adv";
    if (!ablation.use_mal) id += "-mal";
  }
  return id + "+" + ToString(ablation.downstream_input);
}

ExperimentConfig DeskScaleConfig(Variant variant) {
  ExperimentConfig config;
  config.name = "desk-" + ToString(variant);
  config.variant = variant;
  config.ablation = DefaultAblation(variant);
  if (variant == Variant::kBetaVae) config.weights.kl_beta = 4.0;
  config.weights.beta = 50.0;
  auto& s = config.schedule;
  s.repr_epochs = 10;
  s.downstream_epochs = 10;
  s.repr_lr = 1e-3;
  s.downstream_lr = 1e-2;
  s.adversary_steps = 5;
  s.batch_size = 16;
  return config;
}

json ToJson(const ExperimentConfig& c) {
  json j;
  j["schema_version"] = kSchemaVersion;
  j["name"] = c.name;
  j["variant"] = ToString(c.variant);
  j["ablation"] = {{"use_cls", c.ablation.use_cls},
                   {"use_adv", c.ablation.use_adv},
                   {"use_mal", c.ablation.use_mal},
                   {"downstream_input", ToString(c.ablation.downstream_input)}};
  j["weights"] = {{"alpha", c.weights.alpha},
                  {"beta", c.weights.beta},
                  {"gamma", c.weights.gamma},
                  {"kl_beta", c.weights.kl_beta}};
  const auto& s = c.schedule;
  j["schedule"] = {{"repr_epochs", s.repr_epochs},
                   {"downstream_epochs", s.downstream_epochs},
                   {"repr_lr", s.repr_lr},
                   {"downstream_lr", s.downstream_lr},
                   {"adversary_lr_scale", s.adversary_lr_scale},
                   {"adversary_steps", s.adversary_steps},
                   {"batch_size", s.batch_size},
                   {"seed", s.seed},
                   {"optimizer", {{"kind", s.optimizer}, {"beta1", s.beta1}, {"beta2", s.beta2}}}};
  if (c.dataset.kind == DatasetSection::Kind::kSynthetic) {
    j["dataset"] = {{"kind", "synthetic"}, {"synthetic", data::ToJson(c.dataset.synthetic)}};
  } else {
    json d = {{"kind", "attribute"},
              {"root", c.dataset.root},
              {"target", c.dataset.pair.target_name},
              {"protected", c.dataset.pair.protected_name},
              {"target_positive", c.dataset.pair.target_positive},
              {"protected_positive", c.dataset.pair.protected_positive}};
    if (c.dataset.composition) d["composition"] = data::ToJson(*c.dataset.composition);
    j["dataset"] = d;
  }
  j["seeds"] = c.seeds;
  return j;
}

ExperimentConfig ConfigFromJson(const json& j) {
  try {
    RequireKeys(j, "", {"schema_version", "name", "variant", "ablation", "weights",
                        "schedule", "dataset", "seeds"});
    const int version = j.value("schema_version", kSchemaVersion);
    if (version != kSchemaVersion) {
      throw ConfigError("UnsupportedSchema",
                        "schema_version " + std::to_string(version) + " is not supported");
    }
    ExperimentConfig c;
    if (j.contains("variant")) c.variant = ParseVariant(j.at("variant").get<std::string>());
    c.ablation = DefaultAblation(c.variant);
    Read(j, "name", c.name);
    if (j.contains("ablation")) {
      const auto& a = j.at("ablation");
      RequireKeys(a, "ablation", {"use_cls", "use_adv", "use_mal", "downstream_input"});
      Read(a, "use_cls", c.ablation.use_cls);
      Read(a, "use_adv", c.ablation.use_adv);
      Read(a, "use_mal", c.ablation.use_mal);
      if (a.contains("downstream_input")) {
        c.ablation.downstream_input =
            ParseDownstreamInput(a.at("downstream_input").get<std::string>());
      }
    }
    if (j.contains("weights")) {
      const auto& w = j.at("weights");
      RequireKeys(w, "weights", {"alpha", "beta", "gamma", "kl_beta"});
      Read(w, "alpha", c.weights.alpha);
      Read(w, "beta", c.weights.beta);
      Read(w, "gamma", c.weights.gamma);
      Read(w, "kl_beta", c.weights.kl_beta);
    }
    if (j.contains("schedule")) {
      const auto& s = j.at("schedule");
      RequireKeys(s, "schedule", {"repr_epochs", "downstream_epochs", "repr_lr",
                                  "downstream_lr", "adversary_lr_scale", "adversary_steps",
                                  "batch_size", "seed", "optimizer"});
      Read(s, "repr_epochs", c.schedule.repr_epochs);
      Read(s, "downstream_epochs", c.schedule.downstream_epochs);
      Read(s, "repr_lr", c.schedule.repr_lr);
      Read(s, "downstream_lr", c.schedule.downstream_lr);
      Read(s, "adversary_lr_scale", c.schedule.adversary_lr_scale);
      Read(s, "adversary_steps", c.schedule.adversary_steps);
      Read(s, "batch_size", c.schedule.batch_size);
      Read(s, "seed", c.schedule.seed);
      if (s.contains("optimizer")) {
        const auto& o = s.at("optimizer");
        RequireKeys(o, "schedule.optimizer", {"kind", "beta1", "beta2"});
        Read(o, "kind", c.schedule.optimizer);
        Read(o, "beta1", c.schedule.beta1);
        Read(o, "beta2", c.schedule.beta2);
      }
    }
    if (j.contains("dataset")) {
      const auto& d = j.at("dataset");
      const std::string kind = d.value("kind", std::string("synthetic"));
      if (kind == "synthetic") {
        RequireKeys(d, "dataset", {"kind", "synthetic"});
        c.dataset.kind = DatasetSection::Kind::kSynthetic;
        if (d.contains("synthetic")) {
          const auto& s = d.at("synthetic");
          RequireKeys(s, "dataset.synthetic", {"train_count", "validation_count",
                                               "test_count", "skew", "noise", "seed"});
          json merged = data::ToJson(c.dataset.synthetic);
          merged.update(s);
          c.dataset.synthetic = data::SyntheticSpecFromJson(merged);
        }
      } else if (kind == "attribute") {
        RequireKeys(d, "dataset", {"kind", "root", "target", "protected", "target_positive",
                                   "protected_positive", "composition"});
        c.dataset.kind = DatasetSection::Kind::kAttribute;
        Read(d, "root", c.dataset.root);
        Read(d, "target", c.dataset.pair.target_name);
        Read(d, "protected", c.dataset.pair.protected_name);
        Read(d, "target_positive", c.dataset.pair.target_positive);
        Read(d, "protected_positive", c.dataset.pair.protected_positive);
        if (d.contains("composition")) {
          c.dataset.composition = data::CompositionSpecFromJson(d.at("composition"));
        }
      } else {
        throw ConfigError("InvalidConfig", "dataset.kind must be synthetic or attribute");
      }
    }
    Read(j, "seeds", c.seeds);
    return c;
  } catch (const json::exception& e) {
    throw ConfigError("InvalidValue", e.what());
  }
}

ExperimentConfig LoadConfig(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("MissingConfig", "cannot open " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError("ConfigParse", path.string() + ": " + e.what());
  }
  return ConfigFromJson(j);
}

void SaveConfig(const std::filesystem::path& path, const ExperimentConfig& config) {
  std::ofstream out(path);
  if (!out) throw DataError("UnwritableFile", "cannot write " + path.string());
  out << ToJson(config).dump(2) << '\n';
}

ExperimentConfig ApplyOverrides(const ExperimentConfig& config,
                                std::span<const std::string> overrides) {
  json j = ToJson(config);
  for (const std::string& item : overrides) {
    const auto eq = item.find('=');
    if (eq == std::string::npos || eq == 0) {
      throw ConfigError("InvalidOverride", "override '" + item + "' is not key=value");
    }
    const std::string key = item.substr(0, eq);
    const std::string raw = item.substr(eq + 1);
    json* node = &j;
    std::stringstream path(key);
    std::string segment;
    while (std::getline(path, segment, '.')) {
      if (!node->is_object() || !node->contains(segment)) {
        throw ConfigError("UnknownOverrideKey", "unknown config key '" + key + "'");
      }
      node = &(*node)[segment];
    }
    json value;
    try {
      value = json::parse(raw);
    } catch (const json::exception&) {
      value = raw;
    }
    *node = value;
  }
  return ConfigFromJson(j);
}

std::string ConfigHash(const ExperimentConfig& config) {
  json j = ToJson(config);
  j.erase("seeds");
  j["schedule"].erase("seed");
  Fnv1a hash;
  hash.Update(j.dump());  // object keys are emitted in sorted order
  return hash.Hex();
}

// Loss masks -----------------------------------------------------------------

std::size_t ActiveTerms::count() const {
  return int(recon) + int(kl) + int(tc) + int(discriminator) + int(cls_t) + int(cls_p) +
         int(adv);
}

std::string ActiveTerms::Describe() const {
  std::ostringstream out;
  const char* sep = "";
  auto add = [&](bool on, const std::string& name) {
    if (!on) return;
    out << sep << name;
    sep = ", ";
  };
  add(recon, "recon");
  std::ostringstream kl_name;
  kl_name << "kl(x" << kl_weight << ")";
  add(kl, kl_name.str());
  add(tc, "tc");
  add(discriminator, "discriminator");
  add(cls_t, "cls_t[" + target_block + "]");
  add(cls_p, "cls_p[" + protected_block + "]");
  add(adv, "adv");
  return out.str();
}

ActiveTerms VariantLossMask(const ExperimentConfig& config) {
  config.Validate();
  ActiveTerms terms;
  terms.kl_weight = config.weights.kl_beta;
  switch (config.variant) {
    case Variant::kVae:
    case Variant::kBetaVae:
      break;
    case Variant::kFactorVae:
      terms.tc = terms.discriminator = true;
      terms.layout = model::LatentLayout::PerDimension();
      break;
    case Variant::kFdVae:
      terms.tc = terms.discriminator = true;
      terms.layout = config.ablation.use_mal ? model::LatentLayout::ThreeWay()
                                             : model::LatentLayout::TargetProtected();
      terms.cls_t = terms.cls_p = config.ablation.use_cls;
      terms.adv = config.ablation.use_adv;
      break;
    case Variant::kFfVaeApprox:
      terms.tc = terms.discriminator = true;
      terms.layout = model::LatentLayout::SensitiveSplit();
      terms.cls_p = true;
      terms.target_block = "nonsensitive";
      terms.protected_block = "sensitive";
      break;
  }
  return terms;
}

model::ModelSpec ModelSpecFor(const ExperimentConfig& config) {
  const ActiveTerms terms = VariantLossMask(config);
  model::ModelSpec spec;
  spec.layout = terms.layout;
  spec.discriminator = terms.discriminator;
  if (terms.cls_t) spec.target_head_dim = terms.layout.Find(terms.target_block).width;
  if (terms.cls_p) spec.protected_head_dim = terms.layout.Find(terms.protected_block).width;
  spec.adversary_heads = terms.adv;
  return spec;
}

model::DownstreamSpec DownstreamSpecFor(const ExperimentConfig& config) {
  model::DownstreamSpec spec;
  switch (config.ablation.downstream_input) {
    case DownstreamInput::kFull:
    case DownstreamInput::kLatentRemovalK1:
    case DownstreamInput::kLatentRemovalK2:
      spec.task_input_dim = model::kLatentDim;
      break;
    case DownstreamInput::kZtOnly:
      spec.task_input_dim = VariantLossMask(config).layout.Find("TAL").width;
      break;
    case DownstreamInput::kZtPlusRawZm:
      spec.task_input_dim = model::kSubspaceDim;
      break;
    case DownstreamInput::kZtPlusTransformedZm:
      spec.task_input_dim = model::kSubspaceDim;
      spec.transform = true;
      break;
    case DownstreamInput::kSensitiveOnly:
    case DownstreamInput::kNonsensitiveOnly:
      spec.task_input_dim = model::kLatentDim / 2;
      break;
  }
  return spec;
}

Tensor DownstreamInputVector(DownstreamInput kind, const model::LatentLayout& layout,
                             const Tensor& z, std::span<const std::size_t> removed_dims,
                             const Tensor* transformed_zm) {
  if (z.rank() != 2 || z.dim(1) != model::kLatentDim) {
    throw DataError("ShapeMismatch", "downstream input expects [B,60] latents");
  }
  auto block = [&](const char* name) {
    if (!layout.Has(name)) {
      throw ConfigError("InconsistentConfig", ToString(kind) + " needs a " +
                                                  std::string(name) + " subspace");
    }
    const auto& b = layout.Find(name);
    return SliceColumns(z, b.offset, b.width);
  };
  switch (kind) {
    case DownstreamInput::kFull:
      return z;
    case DownstreamInput::kLatentRemovalK1:
    case DownstreamInput::kLatentRemovalK2: {
      const std::size_t k = kind == DownstreamInput::kLatentRemovalK1 ? 1 : 2;
      if (removed_dims.size() != k) {
        throw ConfigError("InconsistentConfig",
                          "latent removal needs " + std::to_string(k) + " dims");
      }
      Tensor out = z;
      for (std::size_t r = 0; r < z.dim(0); ++r) {
        for (std::size_t dim : removed_dims) out.at(r, dim) = 0.0f;
      }
      return out;
    }
    case DownstreamInput::kZtOnly:
      return block("TAL");
    case DownstreamInput::kZtPlusRawZm: {
      Tensor out = block("TAL");
      out += block("MAL");
      return out;
    }
    case DownstreamInput::kZtPlusTransformedZm: {
      if (!transformed_zm) {
        throw InternalError("MissingTransform", "zt_plus_transformed_zm needs f(z_m)");
      }
      Tensor out = block("TAL");
      out += *transformed_zm;
      return out;
    }
    case DownstreamInput::kSensitiveOnly:
      return block("sensitive");
    case DownstreamInput::kNonsensitiveOnly:
      return block("nonsensitive");
  }
  return z;
}

}  // namespace fdvae::exp
