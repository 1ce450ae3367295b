#pragma once

#include <cmath>
#include <cstddef>
#include <mutex>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "sema/error.hpp"
#include "sema/http.hpp"
#include "sema/semantic_metrics.hpp"

namespace sema {

/// Client for an embedding service: POST {url}/embed with
/// {model, tokens} -> {vectors}. One vector per token; vectors are
/// renormalized to unit length.
class RemoteEmbeddingBackend final : public EmbeddingBackend {
  public:
    RemoteEmbeddingBackend(std::string url, std::string model = "bert-base-uncased",
                           RetryPolicy policy = {})
        : endpoint_(Endpoint::parse(url)), model_(std::move(model)), policy_(policy) {}

    std::size_t dimension() const override {
        std::lock_guard lock(mutex_);
        return dimension_;
    }

    std::vector<TokenVector> embed(const TokenSequence& tokens) override {
        if (tokens.empty()) return {};
        const auto reply = post_json(endpoint_, "/embed", {{"model", model_}, {"tokens", tokens}}, policy_);
        if (reply.status != 200) {
            throw TransportError("embedding service returned HTTP " + std::to_string(reply.status));
        }
        nlohmann::json body;
        try {
            body = nlohmann::json::parse(reply.body);
        } catch (const nlohmann::json::parse_error&) {
            throw Error("embedding service response is not JSON");
        }
        const auto vectors = body.find("vectors");
        if (vectors == body.end() || !vectors->is_array() || vectors->size() != tokens.size()) {
            throw Error("embedding service must return one vector per token");
        }
        std::vector<TokenVector> out;
        out.reserve(tokens.size());
        for (const auto& v : *vectors) {
            auto dense = v.get<std::vector<double>>();
            check_dimension(dense.size());
            double sq = 0.0;
            for (double x : dense) sq += x * x;
            const double n = std::sqrt(sq);
            if (n > 0.0) {
                for (double& x : dense) x /= n;
            }
            out.push_back(TokenVector::from_dense(dense));
        }
        return out;
    }

  private:
    void check_dimension(std::size_t d) {
        std::lock_guard lock(mutex_);
        if (dimension_ == 0) dimension_ = d;
        if (d == 0 || d != dimension_) throw Error("embedding service returned vectors of varying dimension");
    }

    Endpoint endpoint_;
    std::string model_;
    RetryPolicy policy_;
    mutable std::mutex mutex_;
    std::size_t dimension_ = 0;
};

}  // namespace sema
