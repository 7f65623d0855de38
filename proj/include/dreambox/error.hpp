#pragma once

#include <stdexcept>
#include <string>

namespace dreambox {

// Every failure carries the pipeline stage and a short machine-readable code
// so the CLI can map it to an exit status and an error object.
class Error : public std::runtime_error
{
public:
  Error(std::string stage, std::string code, const std::string& message)
    : std::runtime_error(message), stage_(std::move(stage)), code_(std::move(code))
  {
  }

  const std::string& stage() const noexcept { return stage_; }
  const std::string& code() const noexcept { return code_; }

private:
  std::string stage_;
  std::string code_;
};

class ParseError : public Error
{
public:
  explicit ParseError(const std::string& message) : Error("dataset", "parse_error", message) {}
};

class ValidationError : public Error
{
public:
  explicit ValidationError(const std::string& message, std::string stage = "dataset")
    : Error(std::move(stage), "validation_error", message)
  {
  }
};

class ConfigError : public Error
{
public:
  explicit ConfigError(const std::string& message) : Error("config", "config_error", message) {}
};

// Generator/embedder unreachable or returned a non-2xx response.
class TransportError : public Error
{
public:
  explicit TransportError(const std::string& message, std::string stage = "synthesize")
    : Error(std::move(stage), "transport_error", message)
  {
  }
};

// An adapter answered but broke its declared contract (wrong dimension, bad shape).
class ContractError : public Error
{
public:
  explicit ContractError(const std::string& message, std::string stage = "synthesize")
    : Error(std::move(stage), "contract_error", message)
  {
  }
};

class SynthesisError : public Error
{
public:
  explicit SynthesisError(const std::string& message, std::string code = "synthesis_error")
    : Error("synthesize", std::move(code), message)
  {
  }
};

class TrainingError : public Error
{
public:
  explicit TrainingError(const std::string& message, std::string code = "training_error")
    : Error("train", std::move(code), message)
  {
  }
};

class EvaluationError : public Error
{
public:
  explicit EvaluationError(const std::string& message, std::string code = "evaluation_error")
    : Error("evaluate", std::move(code), message)
  {
  }
};

} // namespace dreambox
