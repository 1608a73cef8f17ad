#pragma once

#include <map>
#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

namespace iclsel {

/// Label of one demonstration in the prompt, as the backend sees it
/// (verbalized), with its selection-space similarity.
struct DemoMeta {
    std::string label;
    double similarity = 0.0;
};

/// Protocol request. Only `prompt` and `candidates` go over the wire;
/// `demonstrations` is prompt metadata for in-process stubs.
struct InferenceRequest {
    std::string prompt;
    std::vector<std::string> candidates;
    std::vector<DemoMeta> demonstrations;
};

using ScoreMap = std::map<std::string, double>;

/// Scores verbalized candidate labels for a prompt. Implementations must be
/// safe to call concurrently.
class InferenceBackend {
  public:
    virtual ~InferenceBackend() = default;
    virtual std::string name() const = 0;
    /// Throws BackendError (retryable) or ProtocolError.
    virtual ScoreMap score(const InferenceRequest& request) const = 0;
};

/// Score = number of demonstrations carrying the candidate label, plus a
/// fractional rank term in [0, 0.5) that orders candidates by their most
/// similar demonstration (then by candidate order). The integer part is the
/// label frequency; the fraction only separates equal counts, so the argmax
/// reproduces majority voting with its tie rules.
class VoteStubBackend final : public InferenceBackend {
  public:
    std::string name() const override { return "vote_stub"; }
    ScoreMap score(const InferenceRequest& request) const override;
};

/// Every candidate scores 0.
class ConstantBackend final : public InferenceBackend {
  public:
    std::string name() const override { return "constant"; }
    ScoreMap score(const InferenceRequest& request) const override;
};

struct BackendSettings {
    std::string kind = "vote_stub";  ///< vote_stub | constant | http
    std::string url;                 ///< http only, e.g. http://127.0.0.1:8080/score
    int timeout_ms = 30000;
    int retries = 2;  ///< extra attempts after the first
};

/// POSTs {prompt, candidates} as JSON and expects {scores: {candidate: number}}.
class HttpBackend final : public InferenceBackend {
  public:
    explicit HttpBackend(BackendSettings settings);
    std::string name() const override { return "http:" + settings_.url; }
    ScoreMap score(const InferenceRequest& request) const override;

  private:
    BackendSettings settings_;
    std::string host_;  ///< scheme://host[:port]
    std::string path_;
};

std::unique_ptr<InferenceBackend> make_backend(const BackendSettings& settings);

std::string request_body(const InferenceRequest& request);
/// Parses a response body; throws ProtocolError on malformed JSON,
/// non-numeric or non-finite scores.
ScoreMap parse_response_body(const std::string& body);

}  // namespace iclsel
