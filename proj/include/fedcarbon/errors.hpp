#pragma once

#include <stdexcept>
#include <string>

namespace fedcarbon {

/// Base class for all library errors.
class Error : public std::runtime_error {
public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// power_profile
class MalformedDocument : public Error {
public:
  explicit MalformedDocument(const std::string& msg) : Error("malformed document: " + msg) {}
};

class NonNumericValue : public Error {
public:
  explicit NonNumericValue(const std::string& msg) : Error("non-numeric value: " + msg) {}
};

class EmptyProfile : public Error {
public:
  EmptyProfile() : Error("power profile contains no items") {}
};

class MissingField : public Error {
public:
  explicit MissingField(const std::string& name)
      : Error("missing field: " + name), field_(name) {}
  const std::string& field() const { return field_; }

private:
  std::string field_;
};

class NoSimilarDevice : public Error {
public:
  explicit NoSimilarDevice(const std::string& key)
      : Error("no similar device resolvable for: " + key) {}
};

// carbon
class UnknownCountry : public Error {
public:
  explicit UnknownCountry(const std::string& code)
      : Error("unknown country code: " + code), code_(code) {}
  const std::string& code() const { return code_; }

private:
  std::string code_;
};

// fl_core
class EmptyClientData : public Error {
public:
  EmptyClientData() : Error("client has no training data") {}
};

class EmptyBuffer : public Error {
public:
  EmptyBuffer() : Error("aggregation buffer is empty") {}
};

class ZeroProbability : public Error {
public:
  ZeroProbability() : Error("token probability must lie in (0, 1]") {}
};

class EmptyHeldout : public Error {
public:
  EmptyHeldout() : Error("held-out evaluation set is empty") {}
};

// sim
class InvalidSpec : public Error {
public:
  explicit InvalidSpec(const std::string& msg) : Error("invalid spec: " + msg) {}
};

class InsufficientPopulation : public Error {
public:
  InsufficientPopulation(std::size_t have, std::size_t need)
      : Error("population of " + std::to_string(have) +
              " devices cannot sustain concurrency " + std::to_string(need)) {}
};

// predictor
class DegenerateX : public Error {
public:
  explicit DegenerateX(const std::string& msg) : Error("degenerate regressor: " + msg) {}
};

class MixedModes : public Error {
public:
  MixedModes() : Error("run summaries mix sync and async modes") {}
};

// cli / config
class ConfigError : public Error {
public:
  ConfigError(const std::string& key_path, const std::string& msg)
      : Error("config error at '" + key_path + "': " + msg), key_path_(key_path) {}
  const std::string& key_path() const { return key_path_; }

private:
  std::string key_path_;
};

}  // namespace fedcarbon
