#include "cmcr/config.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace cmcr::config {

using nlohmann::json;

std::string to_string(PolicyKind kind) {
  switch (kind) {
    case PolicyKind::kIsppo: return "isppo";
    case PolicyKind::kOsppo: return "osppo";
    case PolicyKind::kWhittle: return "whittle";
    case PolicyKind::kRandom: return "random";
  }
  return "isppo";
}

PolicyKind policy_from_string(const std::string& name) {
  if (name == "isppo") return PolicyKind::kIsppo;
  if (name == "osppo") return PolicyKind::kOsppo;
  if (name == "whittle") return PolicyKind::kWhittle;
  if (name == "random") return PolicyKind::kRandom;
  throw ConfigError("unknown policy kind '" + name + "'");
}

void ExperimentConfig::validate() const {
  auto fail = [](const std::string& msg) { throw ConfigError("experiment config: " + msg); };
  if (channel_count < 1) fail("channel_count must be >= 1");
  if (fixed_pattern_channels < 0 || markov_groups < 0 || markov_group_size < 0)
    fail("negative spectrum partition");
  if (fixed_pattern_channels + markov_groups * markov_group_size != channel_count)
    fail("fixed_pattern_channels + markov_groups*markov_group_size must equal channel_count");
  if (fixed_pattern_channels > 0) {
    if (fixed_pattern_groups < 1) fail("fixed_pattern_groups must be >= 1");
    if (fixed_pattern_channels % fixed_pattern_groups != 0)
      fail("fixed_pattern_channels must divide evenly into groups");
  }
  if (markov_groups > 0 && markov_group_size < 1)
    fail("markov_group_size must be >= 1 when markov groups exist");
  if (markov_linkage != "mirror" && markov_linkage != "opposite")
    fail("markov_linkage must be 'mirror' or 'opposite'");
  if (observed_psd != "exact" && observed_psd != "sampled")
    fail("observed_psd must be 'exact' or 'sampled'");
  if (eval_mode != "greedy" && eval_mode != "sample")
    fail("eval_mode must be 'greedy' or 'sample'");
  policy_from_string(policy);
  if (history_slots < 1) fail("history_slots must be >= 1");
  if (eval_slots < 1) fail("eval_slots must be >= 1");
  if (hidden_units < 1) fail("hidden_units must be >= 1");
  if (checkpoint_every < 1) fail("checkpoint_every must be >= 1");
  if (whittle_warmup_slots < 2) fail("whittle_warmup_slots must be >= 2");
  if (!(whittle_belief_grid > 0.0 && whittle_belief_grid <= 0.5))
    fail("whittle_belief_grid out of range");
  if (!(whittle_vi_tol > 0.0)) fail("whittle_vi_tol must be positive");
  if (seeds.empty()) fail("seeds must be nonempty");
  if (pulses_per_slot * pri_us > slot_ms * 1000.0)
    fail("N pulses at the configured PRI do not fit into one slot");

  spectrum_config().validate();
  radar_params().validate();
  ppo_params().validate();
}

spectrum::SpectrumConfig ExperimentConfig::spectrum_config() const {
  spectrum::SpectrumConfig sc;
  sc.num_channels = channel_count;
  sc.noise_psd = noise_psd;
  const double inr = std::pow(10.0, inr_db / 10.0);
  sc.interference_psd.assign(channel_count, inr * noise_psd);
  sc.kind.assign(channel_count, spectrum::ChannelKind::kMarkovIndependent);
  sc.markov.assign(channel_count, {});
  sc.link_source.assign(channel_count, -1);
  sc.fixed.group_of_channel.assign(channel_count, -1);
  sc.fixed.switch_prob = switch_prob;

  if (fixed_pattern_channels > 0) {
    const int per_group = fixed_pattern_channels / fixed_pattern_groups;
    for (int g = 0; g < fixed_pattern_groups; ++g) sc.fixed.group_order.push_back(g);
    for (int c = 0; c < fixed_pattern_channels; ++c) {
      sc.kind[c] = spectrum::ChannelKind::kFixedPattern;
      sc.fixed.group_of_channel[c] = c / per_group;
    }
  }
  const bool mirror = markov_linkage == "mirror";
  for (int g = 0; g < markov_groups; ++g) {
    const int base = fixed_pattern_channels + g * markov_group_size;
    sc.kind[base] = spectrum::ChannelKind::kMarkovIndependent;
    sc.markov[base] = {markov_p01, markov_p10};
    for (int i = 1; i < markov_group_size; ++i) {
      sc.kind[base + i] = mirror ? spectrum::ChannelKind::kMarkovMirror
                                 : spectrum::ChannelKind::kMarkovOpposite;
      sc.link_source[base + i] = base;
    }
  }
  return sc;
}

detection::RadarParams ExperimentConfig::radar_params() const {
  detection::RadarParams rp;
  rp.carrier_hz = carrier_ghz * 1e9;
  rp.freq_step_hz = channel_bw_mhz * 1e6;
  rp.num_channels = channel_count;
  rp.num_selected = selected_count;
  rp.pulses_per_slot = pulses_per_slot;
  rp.pri_s = pri_us * 1e-6;
  rp.pulse_width_s = pulse_width_us * 1e-6;
  rp.noise_psd = noise_psd;
  const double snr = std::pow(10.0, snr_db / 10.0);
  rp.scatter_coeff = std::sqrt(snr * noise_psd * rp.freq_step_hz);
  rp.target_speed = target_speed_mps;
  rp.initial_range = target_range_km * 1e3;
  rp.false_alarm_rate = false_alarm_rate;
  return rp;
}

env::EnvConfig ExperimentConfig::env_config() const {
  env::EnvConfig ec;
  ec.spectrum = spectrum_config();
  ec.radar = radar_params();
  ec.history_depth = history_slots;
  ec.sampled_observation = observed_psd == "sampled";
  return ec;
}

ppo::PpoHyperparams ExperimentConfig::ppo_params() const {
  ppo::PpoHyperparams hp;
  hp.discount = discount;
  hp.gae_lambda = gae_lambda;
  hp.clip_ratio = clip_ratio;
  hp.epochs_per_iteration = epochs_per_iteration;
  hp.minibatch_size = minibatch_size;
  hp.iterations = iterations;
  hp.trajectories_per_iteration = trajectories_per_iteration;
  hp.slots_per_trajectory = slots_per_trajectory;
  hp.learning_rate = learning_rate;
  hp.value_loss_coef = value_loss_coef;
  hp.entropy_coef = entropy_coef;
  return hp;
}

eval::WhittleEvalOptions ExperimentConfig::whittle_options() const {
  eval::WhittleEvalOptions opt;
  opt.warmup_slots = whittle_warmup_slots;
  opt.discount = discount;
  opt.solver.grid_step = whittle_belief_grid;
  opt.solver.vi_tol = whittle_vi_tol;
  return opt;
}

namespace {

template <class T>
void read_field(const json& j, const char* key, T& out) {
  if (j.contains(key)) j.at(key).get_to(out);
}

// Field traversal shared by the parser (checking unknown keys) and the
// serializer so the two cannot drift apart.
const char* const kKnownKeys[] = {
    "channel_count", "selected_count", "pulses_per_slot", "pri_us", "pulse_width_us",
    "carrier_ghz", "channel_bw_mhz", "slot_ms", "noise_psd", "snr_db", "inr_db",
    "false_alarm_rate", "target_speed_mps", "target_range_km", "fixed_pattern_channels",
    "fixed_pattern_groups", "switch_prob", "markov_groups", "markov_group_size", "markov_p01",
    "markov_p10", "markov_linkage", "history_slots", "observed_psd", "discount", "gae_lambda",
    "clip_ratio", "epochs_per_iteration", "minibatch_size", "iterations",
    "trajectories_per_iteration", "slots_per_trajectory", "learning_rate", "value_loss_coef",
    "entropy_coef", "hidden_units", "policy", "eval_slots", "eval_mode", "checkpoint_every",
    "whittle_warmup_slots", "whittle_belief_grid", "whittle_vi_tol", "seeds", "out_dir"};

}  // namespace

std::string serialize(const ExperimentConfig& c) {
  json j;
  j["channel_count"] = c.channel_count;
  j["selected_count"] = c.selected_count;
  j["pulses_per_slot"] = c.pulses_per_slot;
  j["pri_us"] = c.pri_us;
  j["pulse_width_us"] = c.pulse_width_us;
  j["carrier_ghz"] = c.carrier_ghz;
  j["channel_bw_mhz"] = c.channel_bw_mhz;
  j["slot_ms"] = c.slot_ms;
  j["noise_psd"] = c.noise_psd;
  j["snr_db"] = c.snr_db;
  j["inr_db"] = c.inr_db;
  j["false_alarm_rate"] = c.false_alarm_rate;
  j["target_speed_mps"] = c.target_speed_mps;
  j["target_range_km"] = c.target_range_km;
  j["fixed_pattern_channels"] = c.fixed_pattern_channels;
  j["fixed_pattern_groups"] = c.fixed_pattern_groups;
  j["switch_prob"] = c.switch_prob;
  j["markov_groups"] = c.markov_groups;
  j["markov_group_size"] = c.markov_group_size;
  j["markov_p01"] = c.markov_p01;
  j["markov_p10"] = c.markov_p10;
  j["markov_linkage"] = c.markov_linkage;
  j["history_slots"] = c.history_slots;
  j["observed_psd"] = c.observed_psd;
  j["discount"] = c.discount;
  j["gae_lambda"] = c.gae_lambda;
  j["clip_ratio"] = c.clip_ratio;
  j["epochs_per_iteration"] = c.epochs_per_iteration;
  j["minibatch_size"] = c.minibatch_size;
  j["iterations"] = c.iterations;
  j["trajectories_per_iteration"] = c.trajectories_per_iteration;
  j["slots_per_trajectory"] = c.slots_per_trajectory;
  j["learning_rate"] = c.learning_rate;
  j["value_loss_coef"] = c.value_loss_coef;
  j["entropy_coef"] = c.entropy_coef;
  j["hidden_units"] = c.hidden_units;
  j["policy"] = c.policy;
  j["eval_slots"] = c.eval_slots;
  j["eval_mode"] = c.eval_mode;
  j["checkpoint_every"] = c.checkpoint_every;
  j["whittle_warmup_slots"] = c.whittle_warmup_slots;
  j["whittle_belief_grid"] = c.whittle_belief_grid;
  j["whittle_vi_tol"] = c.whittle_vi_tol;
  j["seeds"] = c.seeds;
  j["out_dir"] = c.out_dir;
  return j.dump(2) + "\n";
}

ExperimentConfig parse(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw ConfigError("config root must be a JSON object");
  for (const auto& item : j.items()) {
    bool known = false;
    for (const char* key : kKnownKeys) known |= (item.key() == key);
    if (!known) throw ConfigError("unknown config key '" + item.key() + "'");
  }

  ExperimentConfig c;
  try {
    read_field(j, "channel_count", c.channel_count);
    read_field(j, "selected_count", c.selected_count);
    read_field(j, "pulses_per_slot", c.pulses_per_slot);
    read_field(j, "pri_us", c.pri_us);
    read_field(j, "pulse_width_us", c.pulse_width_us);
    read_field(j, "carrier_ghz", c.carrier_ghz);
    read_field(j, "channel_bw_mhz", c.channel_bw_mhz);
    read_field(j, "slot_ms", c.slot_ms);
    read_field(j, "noise_psd", c.noise_psd);
    read_field(j, "snr_db", c.snr_db);
    read_field(j, "inr_db", c.inr_db);
    read_field(j, "false_alarm_rate", c.false_alarm_rate);
    read_field(j, "target_speed_mps", c.target_speed_mps);
    read_field(j, "target_range_km", c.target_range_km);
    read_field(j, "fixed_pattern_channels", c.fixed_pattern_channels);
    read_field(j, "fixed_pattern_groups", c.fixed_pattern_groups);
    read_field(j, "switch_prob", c.switch_prob);
    read_field(j, "markov_groups", c.markov_groups);
    read_field(j, "markov_group_size", c.markov_group_size);
    read_field(j, "markov_p01", c.markov_p01);
    read_field(j, "markov_p10", c.markov_p10);
    read_field(j, "markov_linkage", c.markov_linkage);
    read_field(j, "history_slots", c.history_slots);
    read_field(j, "observed_psd", c.observed_psd);
    read_field(j, "discount", c.discount);
    read_field(j, "gae_lambda", c.gae_lambda);
    read_field(j, "clip_ratio", c.clip_ratio);
    read_field(j, "epochs_per_iteration", c.epochs_per_iteration);
    read_field(j, "minibatch_size", c.minibatch_size);
    read_field(j, "iterations", c.iterations);
    read_field(j, "trajectories_per_iteration", c.trajectories_per_iteration);
    read_field(j, "slots_per_trajectory", c.slots_per_trajectory);
    read_field(j, "learning_rate", c.learning_rate);
    read_field(j, "value_loss_coef", c.value_loss_coef);
    read_field(j, "entropy_coef", c.entropy_coef);
    read_field(j, "hidden_units", c.hidden_units);
    read_field(j, "policy", c.policy);
    read_field(j, "eval_slots", c.eval_slots);
    read_field(j, "eval_mode", c.eval_mode);
    read_field(j, "checkpoint_every", c.checkpoint_every);
    read_field(j, "whittle_warmup_slots", c.whittle_warmup_slots);
    read_field(j, "whittle_belief_grid", c.whittle_belief_grid);
    read_field(j, "whittle_vi_tol", c.whittle_vi_tol);
    read_field(j, "seeds", c.seeds);
    read_field(j, "out_dir", c.out_dir);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config field has the wrong type: ") + e.what());
  }
  c.validate();
  return c;
}

ExperimentConfig load_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse(buffer.str());
}

ExperimentConfig preset(const std::string& name) {
  ExperimentConfig c;  // defaults are case C1
  if (name == "c1") {
    c.switch_prob = 0.80;
    c.markov_p01 = c.markov_p10 = 0.20;
  } else if (name == "c2") {
    c.switch_prob = 0.80;
    c.markov_p01 = c.markov_p10 = 0.15;
  } else if (name == "c3") {
    c.switch_prob = 0.85;
    c.markov_p01 = c.markov_p10 = 0.20;
  } else if (name == "c4") {
    c.switch_prob = 0.85;
    c.markov_p01 = c.markov_p10 = 0.15;
  } else if (name == "fig1") {
    c.fixed_pattern_channels = 10;
    c.fixed_pattern_groups = 5;
    c.markov_groups = 3;
    c.markov_group_size = 2;
    c.switch_prob = 0.8;
    c.markov_p01 = c.markov_p10 = 0.2;
  } else if (name == "markov16") {
    // Sparse, strongly persistent independent chains: the regime where index
    // policies pay off over random access.
    c.fixed_pattern_channels = 0;
    c.fixed_pattern_groups = 0;
    c.markov_groups = 16;
    c.markov_group_size = 1;
    c.markov_p01 = 0.025;
    c.markov_p10 = 0.1;
    c.snr_db = 5.0;
    c.policy = "whittle";
  } else {
    throw ConfigError("unknown preset '" + name + "'");
  }
  c.out_dir = "runs/" + name;
  return c;
}

std::vector<std::string> preset_names() {
  return {"c1", "c2", "c3", "c4", "fig1", "markov16"};
}

std::uint64_t config_fingerprint(const ExperimentConfig& config) {
  const std::string text = serialize(config);
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace cmcr::config
