#pragma once

#include <algorithm>
#include <cctype>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "fedcarbon/errors.hpp"

namespace fedcarbon {

/// Parsed Android-style power profile. Items are currents in mA except
/// *.voltage entries, which are millivolts. Arrays hold per-frequency values.
struct PowerProfileDoc {
  std::string device_name;
  std::map<std::string, double> items;
  std::map<std::string, std::vector<double>> arrays;

  bool operator==(const PowerProfileDoc&) const = default;
};

/// Wi-Fi currents (mA) and controller voltage (mV) extracted from a profile.
struct WifiPowerParams {
  double i_active_ma = 0.0;
  double i_rx_ma = 0.0;
  double i_tx_ma = 0.0;
  double voltage_mv = 0.0;
};

/// CPU currents (mA) at the big cluster's top frequency. Phones are assumed
/// to run at 3.8 V.
struct CpuPowerParams {
  double i_cluster_ma = 0.0;
  double i_active_ma = 0.0;
  double i_core_ma = 0.0;
  double assumed_voltage_v = 3.8;
};

enum class Provenance { measured, imputed };

/// Per-device power figures in SI watts.
struct DevicePowerModel {
  std::string device_key;
  double p_cpu_w = 0.0;
  double p_rx_w = 0.0;
  double p_tx_w = 0.0;
  Provenance provenance = Provenance::measured;
  std::string imputed_from;               // set when provenance == imputed
  bool used_default_wifi_voltage = false; // profile lacked wifi.controller.voltage
};

namespace detail {

class ProfileLexer {
public:
  explicit ProfileLexer(std::string_view text) : s_(text) {}

  void skip_ws() {
    while (pos_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[pos_]))) ++pos_;
  }

  bool at_end() {
    skip_prolog();
    return pos_ >= s_.size();
  }

  // skips whitespace, comments, XML declarations and processing instructions
  void skip_prolog() {
    for (;;) {
      skip_ws();
      if (starts_with("<!--")) {
        const auto end = s_.find("-->", pos_);
        if (end == std::string_view::npos) throw MalformedDocument("unterminated comment");
        pos_ = end + 3;
      } else if (starts_with("<?")) {
        const auto end = s_.find("?>", pos_);
        if (end == std::string_view::npos) throw MalformedDocument("unterminated declaration");
        pos_ = end + 2;
      } else {
        return;
      }
    }
  }

  bool starts_with(std::string_view prefix) const { return s_.substr(pos_).starts_with(prefix); }

  void expect(std::string_view tok) {
    if (!starts_with(tok)) throw MalformedDocument("expected '" + std::string(tok) + "'");
    pos_ += tok.size();
  }

  std::string read_name() {
    std::string out;
    while (pos_ < s_.size()) {
      const char c = s_[pos_];
      if (std::isalnum(static_cast<unsigned char>(c)) || c == '.' || c == '_' || c == '-') {
        out.push_back(c);
        ++pos_;
      } else {
        break;
      }
    }
    if (out.empty()) throw MalformedDocument("expected a name");
    return out;
  }

  // parses attr="value" (single quotes accepted)
  std::string read_attribute(std::string_view attr) {
    skip_ws();
    expect(attr);
    skip_ws();
    expect("=");
    skip_ws();
    if (pos_ >= s_.size()) throw MalformedDocument("unterminated attribute");
    const char quote = s_[pos_];
    if (quote != '"' && quote != '\'') throw MalformedDocument("attribute value must be quoted");
    ++pos_;
    const auto end = s_.find(quote, pos_);
    if (end == std::string_view::npos) throw MalformedDocument("unterminated attribute value");
    std::string value(s_.substr(pos_, end - pos_));
    pos_ = end + 1;
    return value;
  }

  // text up to the next '<'
  std::string read_text() {
    const auto end = s_.find('<', pos_);
    if (end == std::string_view::npos) throw MalformedDocument("unterminated element text");
    std::string out(s_.substr(pos_, end - pos_));
    pos_ = end;
    return out;
  }

private:
  std::string_view s_;
  std::size_t pos_ = 0;
};

inline double parse_number(const std::string& text, const std::string& element) {
  std::string trimmed = text;
  const auto is_space = [](unsigned char c) { return std::isspace(c); };
  trimmed.erase(trimmed.begin(), std::find_if_not(trimmed.begin(), trimmed.end(), is_space));
  trimmed.erase(std::find_if_not(trimmed.rbegin(), trimmed.rend(), is_space).base(), trimmed.end());
  try {
    std::size_t pos = 0;
    const double v = std::stod(trimmed, &pos);
    if (pos != trimmed.size()) throw std::invalid_argument(trimmed);
    return v;
  } catch (const std::exception&) {
    throw NonNumericValue("'" + text + "' in <" + element + ">");
  }
}

}  // namespace detail

/// Parses an Android power_profile.xml style document: a single <device> root
/// holding <item name="...">n</item> and <array name="..."><value>n</value>...</array>
/// children. Unknown item names are retained.
inline PowerProfileDoc parse_power_profile(const std::string& document_text) {
  detail::ProfileLexer lex(document_text);
  lex.skip_prolog();
  lex.expect("<device");
  PowerProfileDoc doc;
  lex.skip_ws();
  if (lex.starts_with("name")) doc.device_name = lex.read_attribute("name");
  lex.skip_ws();
  lex.expect(">");

  for (;;) {
    lex.skip_prolog();
    if (lex.starts_with("</device")) {
      lex.expect("</device");
      lex.skip_ws();
      lex.expect(">");
      break;
    }
    if (lex.starts_with("<item")) {
      lex.expect("<item");
      const std::string name = lex.read_attribute("name");
      lex.skip_ws();
      lex.expect(">");
      const double value = detail::parse_number(lex.read_text(), "item name=\"" + name + "\"");
      lex.expect("</item");
      lex.skip_ws();
      lex.expect(">");
      if (value < 0) throw MalformedDocument("negative value for item '" + name + "'");
      if (!doc.items.emplace(name, value).second)
        throw MalformedDocument("duplicate item '" + name + "'");
    } else if (lex.starts_with("<array")) {
      lex.expect("<array");
      const std::string name = lex.read_attribute("name");
      lex.skip_ws();
      lex.expect(">");
      std::vector<double> values;
      for (;;) {
        lex.skip_prolog();
        if (lex.starts_with("</array")) {
          lex.expect("</array");
          lex.skip_ws();
          lex.expect(">");
          break;
        }
        lex.expect("<value");
        lex.skip_ws();
        lex.expect(">");
        const double v = detail::parse_number(lex.read_text(), "value");
        lex.expect("</value");
        lex.skip_ws();
        lex.expect(">");
        if (v < 0) throw MalformedDocument("negative value in array '" + name + "'");
        values.push_back(v);
      }
      if (!doc.arrays.emplace(name, std::move(values)).second)
        throw MalformedDocument("duplicate array '" + name + "'");
    } else {
      throw MalformedDocument("unexpected content inside <device>");
    }
  }
  if (!lex.at_end()) throw MalformedDocument("content after </device>");
  if (doc.items.empty()) throw EmptyProfile();
  return doc;
}

/// Re-serializes a document in the same markup dialect parse_power_profile reads.
inline std::string serialize_power_profile(const PowerProfileDoc& doc) {
  std::ostringstream out;
  out << "<?xml version=\"1.0\" encoding=\"utf-8\"?>\n";
  out << "<device name=\"" << doc.device_name << "\">\n";
  out.precision(17);
  for (const auto& [name, value] : doc.items)
    out << "    <item name=\"" << name << "\">" << value << "</item>\n";
  for (const auto& [name, values] : doc.arrays) {
    out << "    <array name=\"" << name << "\">\n";
    for (double v : values) out << "        <value>" << v << "</value>\n";
    out << "    </array>\n";
  }
  out << "</device>\n";
  return out.str();
}

/// P_rx = (I_wa + I_wrx) * V_w, converted from mA/mV to watts.
inline double wifi_rx_power(const WifiPowerParams& p) {
  return (p.i_active_ma + p.i_rx_ma) / 1000.0 * (p.voltage_mv / 1000.0);
}

/// P_tx = (I_wa + I_wtx) * V_w, converted from mA/mV to watts.
inline double wifi_tx_power(const WifiPowerParams& p) {
  return (p.i_active_ma + p.i_tx_ma) / 1000.0 * (p.voltage_mv / 1000.0);
}

/// Training draws the sum of the cluster, active, and core currents at the big
/// cluster's top frequency; power follows from the assumed 3.8 V rail.
inline double cpu_train_power(const CpuPowerParams& p) {
  return (p.i_cluster_ma + p.i_active_ma + p.i_core_ma) / 1000.0 * p.assumed_voltage_v;
}

struct BuildOptions {
  // When set, a profile lacking wifi.controller.voltage falls back to this
  // value (mV) and the model is flagged; otherwise MissingField is thrown.
  std::optional<double> fallback_wifi_voltage_mv;
  double assumed_cpu_voltage_v = 3.8;
};

namespace detail {

inline double require_item(const PowerProfileDoc& doc, const std::string& name) {
  const auto it = doc.items.find(name);
  if (it == doc.items.end()) throw MissingField(name);
  return it->second;
}

struct ClusterPick {
  int index = -1;
  std::size_t freq_idx = 0;
  double max_freq = -1.0;
  double current_at_max = 0.0;
};

// Scans cpu.core_speeds.clusterN arrays; the cluster with the highest top
// frequency wins, ties broken by higher current draw at that frequency.
inline ClusterPick pick_big_cluster(const PowerProfileDoc& doc) {
  ClusterPick best;
  for (int n = 0;; ++n) {
    const std::string speeds_key = "cpu.core_speeds.cluster" + std::to_string(n);
    const auto speeds_it = doc.arrays.find(speeds_key);
    if (speeds_it == doc.arrays.end()) {
      if (n == 0) throw MissingField(speeds_key);
      break;
    }
    const auto& speeds = speeds_it->second;
    if (speeds.empty()) throw MalformedDocument(speeds_key + " is empty");
    const auto max_it = std::max_element(speeds.begin(), speeds.end());
    const std::size_t freq_idx = static_cast<std::size_t>(max_it - speeds.begin());

    const std::string power_key = "cpu.core_power.cluster" + std::to_string(n);
    const auto power_it = doc.arrays.find(power_key);
    if (power_it == doc.arrays.end()) throw MissingField(power_key);
    if (freq_idx >= power_it->second.size())
      throw MalformedDocument(power_key + " has fewer entries than " + speeds_key);
    const double current = power_it->second[freq_idx];

    if (*max_it > best.max_freq ||
        (*max_it == best.max_freq && current > best.current_at_max)) {
      best = {n, freq_idx, *max_it, current};
    }
  }
  return best;
}

// cpu.cluster_power.clusterN appears either as a per-frequency array or a
// scalar item depending on profile vintage.
inline double cluster_power_current(const PowerProfileDoc& doc, int cluster,
                                    std::size_t freq_idx) {
  const std::string key = "cpu.cluster_power.cluster" + std::to_string(cluster);
  if (const auto it = doc.arrays.find(key); it != doc.arrays.end()) {
    if (freq_idx >= it->second.size())
      throw MalformedDocument(key + " has fewer entries than the speed table");
    return it->second[freq_idx];
  }
  if (const auto it = doc.items.find(key); it != doc.items.end()) return it->second;
  throw MissingField(key);
}

}  // namespace detail

inline WifiPowerParams extract_wifi_params(const PowerProfileDoc& doc,
                                           const BuildOptions& opts = {},
                                           bool* used_fallback_voltage = nullptr) {
  WifiPowerParams p;
  p.i_active_ma = detail::require_item(doc, "wifi.active");
  p.i_rx_ma = detail::require_item(doc, "wifi.controller.rx");
  p.i_tx_ma = detail::require_item(doc, "wifi.controller.tx");
  const auto it = doc.items.find("wifi.controller.voltage");
  if (it != doc.items.end()) {
    p.voltage_mv = it->second;
  } else if (opts.fallback_wifi_voltage_mv) {
    p.voltage_mv = *opts.fallback_wifi_voltage_mv;
    if (used_fallback_voltage) *used_fallback_voltage = true;
  } else {
    throw MissingField("wifi.controller.voltage");
  }
  return p;
}

inline CpuPowerParams extract_cpu_params(const PowerProfileDoc& doc,
                                         const BuildOptions& opts = {}) {
  const auto pick = detail::pick_big_cluster(doc);
  CpuPowerParams p;
  p.i_core_ma = doc.arrays.at("cpu.core_power.cluster" + std::to_string(pick.index))[pick.freq_idx];
  p.i_cluster_ma = detail::cluster_power_current(doc, pick.index, pick.freq_idx);
  p.i_active_ma = detail::require_item(doc, "cpu.active");
  p.assumed_voltage_v = opts.assumed_cpu_voltage_v;
  return p;
}

/// Assembles a DevicePowerModel from a parsed profile. The big CPU cluster is
/// the one with the highest maximum frequency; currents are taken at that
/// frequency.
inline DevicePowerModel build_device_model(const PowerProfileDoc& profile,
                                           const BuildOptions& opts = {},
                                           const std::string& device_key = {}) {
  DevicePowerModel m;
  m.device_key = device_key.empty() ? profile.device_name : device_key;
  const WifiPowerParams wifi = extract_wifi_params(profile, opts, &m.used_default_wifi_voltage);
  const CpuPowerParams cpu = extract_cpu_params(profile, opts);
  m.p_rx_w = wifi_rx_power(wifi);
  m.p_tx_w = wifi_tx_power(wifi);
  m.p_cpu_w = cpu_train_power(cpu);
  m.provenance = Provenance::measured;
  return m;
}

inline constexpr int kMaxImputationDepth = 4;

/// Resolves a missing device against known models by following the similarity
/// table for at most kMaxImputationDepth hops. Cycles fail as unresolvable.
inline DevicePowerModel impute_device_model(
    const std::string& target, const std::map<std::string, DevicePowerModel>& known,
    const std::map<std::string, std::string>& similarity) {
  std::string cursor = target;
  for (int depth = 0; depth < kMaxImputationDepth; ++depth) {
    const auto next = similarity.find(cursor);
    if (next == similarity.end()) break;
    cursor = next->second;
    const auto hit = known.find(cursor);
    if (hit != known.end()) {
      DevicePowerModel m = hit->second;
      m.device_key = target;
      m.provenance = Provenance::imputed;
      m.imputed_from = hit->second.device_key;
      return m;
    }
  }
  throw NoSimilarDevice(target);
}

/// Looks up a device model, falling back to imputation for unknown keys.
inline DevicePowerModel resolve_device_model(
    const std::string& key, const std::map<std::string, DevicePowerModel>& known,
    const std::map<std::string, std::string>& similarity) {
  if (const auto it = known.find(key); it != known.end()) return it->second;
  return impute_device_model(key, known, similarity);
}

}  // namespace fedcarbon
