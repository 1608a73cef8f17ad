#include "iclsel/backend.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <fmt/format.h>
#include <httplib.h>

#include "iclsel/error.hpp"

namespace iclsel {

ScoreMap VoteStubBackend::score(const InferenceRequest& request) const {
    const auto n = request.candidates.size();
    std::vector<double> counts(n, 0.0);
    std::vector<double> best(n, -std::numeric_limits<double>::infinity());
    for (const auto& d : request.demonstrations) {
        auto it = std::find(request.candidates.begin(), request.candidates.end(), d.label);
        if (it == request.candidates.end()) continue;
        auto c = static_cast<std::size_t>(it - request.candidates.begin());
        counts[c] += 1.0;
        best[c] = std::max(best[c], d.similarity);
    }
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return best[a] > best[b]; });
    ScoreMap out;
    for (std::size_t r = 0; r < n; ++r) {
        auto c = order[r];
        out[request.candidates[c]] = counts[c] + 0.5 * static_cast<double>(n - 1 - r) / static_cast<double>(n);
    }
    return out;
}

ScoreMap ConstantBackend::score(const InferenceRequest& request) const {
    ScoreMap out;
    for (const auto& c : request.candidates) out[c] = 0.0;
    return out;
}

std::string request_body(const InferenceRequest& request) {
    nlohmann::ordered_json j;
    j["prompt"] = request.prompt;
    j["candidates"] = request.candidates;
    return j.dump();
}

ScoreMap parse_response_body(const std::string& body) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(body);
    } catch (const nlohmann::json::parse_error& e) {
        throw ProtocolError(fmt::format("backend response is not JSON: {}", e.what()));
    }
    if (!j.is_object() || !j.contains("scores") || !j["scores"].is_object())
        throw ProtocolError("backend response lacks a 'scores' object");
    ScoreMap out;
    for (const auto& [key, value] : j["scores"].items()) {
        if (!value.is_number()) throw ProtocolError(fmt::format("score for '{}' is not a number", key));
        double v = value.get<double>();
        if (!std::isfinite(v)) throw ProtocolError(fmt::format("score for '{}' is not finite", key));
        out[key] = v;
    }
    return out;
}

HttpBackend::HttpBackend(BackendSettings settings) : settings_(std::move(settings)) {
    const auto& url = settings_.url;
    auto scheme = url.find("://");
    if (scheme == std::string::npos || url.substr(0, scheme) != "http")
        throw InputError(fmt::format("backend url '{}' must start with http://", url));
    auto slash = url.find('/', scheme + 3);
    host_ = url.substr(0, slash);
    path_ = slash == std::string::npos ? "/" : url.substr(slash);
    if (host_.size() <= scheme + 3) throw InputError(fmt::format("backend url '{}' has no host", url));
    if (settings_.timeout_ms <= 0) throw InputError("backend timeout must be positive");
    if (settings_.retries < 0) throw InputError("backend retries must be non-negative");
}

ScoreMap HttpBackend::score(const InferenceRequest& request) const {
    const auto body = request_body(request);
    const auto seconds = settings_.timeout_ms / 1000;
    const auto micros = (settings_.timeout_ms % 1000) * 1000;
    std::string last_error;
    for (int attempt = 0; attempt <= settings_.retries; ++attempt) {
        httplib::Client client(host_);
        client.set_connection_timeout(seconds, micros);
        client.set_read_timeout(seconds, micros);
        client.set_write_timeout(seconds, micros);
        auto res = client.Post(path_, body, "application/json");
        if (!res) {
            last_error = httplib::to_string(res.error());
            continue;
        }
        if (res->status >= 500) {
            last_error = fmt::format("HTTP {}", res->status);
            continue;
        }
        if (res->status != 200) throw ProtocolError(fmt::format("backend answered HTTP {}", res->status));
        return parse_response_body(res->body);
    }
    throw BackendError(fmt::format("backend {} failed after {} attempts: {}", settings_.url, settings_.retries + 1,
                                   last_error));
}

std::unique_ptr<InferenceBackend> make_backend(const BackendSettings& settings) {
    if (settings.kind == "vote_stub") return std::make_unique<VoteStubBackend>();
    if (settings.kind == "constant") return std::make_unique<ConstantBackend>();
    if (settings.kind == "http") return std::make_unique<HttpBackend>(settings);
    throw InputError(fmt::format("unknown backend '{}' (expected vote_stub, constant or http)", settings.kind));
}

}  // namespace iclsel
