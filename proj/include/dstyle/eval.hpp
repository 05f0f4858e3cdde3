#pragma once

#include "dstyle/image_io.hpp"
#include "dstyle/render.hpp"
#include "dstyle/wire.hpp"

#include <atomic>
#include <filesystem>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

namespace dstyle {

enum class EmbeddingSource { Text, Image };

/// Unit-L2 embedding; normalization happens on construction.
class EmbeddingVector {
public:
    EmbeddingVector() = default;
    /// Throws ConfigError for empty, zero or non-finite input.
    EmbeddingVector(std::vector<double> values, EmbeddingSource source);

    const std::vector<double>& values() const { return values_; }
    std::size_t dim() const { return values_.size(); }
    EmbeddingSource source() const { return source_; }

private:
    std::vector<double> values_;
    EmbeddingSource source_ = EmbeddingSource::Text;
};

/// Cosine of two unit embeddings, clamped to [-1, 1]. Throws ShapeError on
/// dimension mismatch.
double cosine(const EmbeddingVector& a, const EmbeddingVector& b);
/// E_I(x) . E_T(y)
inline double image_text_score(const EmbeddingVector& image, const EmbeddingVector& text) {
    return cosine(image, text);
}

struct RetrievalSet {
    std::string true_prompt;
    std::vector<std::string> distractors;

    /// Throws ConfigError when empty or when the true prompt is a distractor.
    void validate() const;
    std::size_t candidate_count() const { return distractors.size() + 1; }
};

/// One prompt per line (UTF-8). Blank lines and trailing CR are ignored.
RetrievalSet load_retrieval_set(const std::string& true_prompt, const std::filesystem::path& distractor_file);

/// Fraction of views whose best-scoring prompt is the true one. A distractor
/// that ties with the true prompt wins.
double r_precision(const std::vector<EmbeddingVector>& views, const RetrievalSet& set,
                   const std::map<std::string, EmbeddingVector>& text_embeddings);

/// Implementations must be safe to call from several threads.
class EmbeddingClient {
public:
    virtual ~EmbeddingClient() = default;
    virtual EmbeddingVector embed_text(const std::string& text) = 0;
    /// `rgb` is H*W*3 floats in [0, 1].
    virtual EmbeddingVector embed_image(std::span<const float> rgb, int width, int height) = 0;
    virtual std::string info() const = 0;
};

class LpipsClient {
public:
    virtual ~LpipsClient() = default;
    virtual double distance(std::span<const float> a, std::span<const float> b, int width, int height) = 0;
};

/// POST /v1/embed
class RemoteEmbeddingClient final : public EmbeddingClient {
public:
    explicit RemoteEmbeddingClient(std::string endpoint, RetryPolicy policy = {});
    EmbeddingVector embed_text(const std::string& text) override;
    EmbeddingVector embed_image(std::span<const float> rgb, int width, int height) override;
    std::string info() const override { return "remote " + client_.url(); }

private:
    EmbeddingVector parse(const nlohmann::json& j, EmbeddingSource source) const;
    JsonClient client_;
};

/// POST /v1/lpips
class RemoteLpipsClient final : public LpipsClient {
public:
    RemoteLpipsClient(std::string endpoint, std::string net = "alex", RetryPolicy policy = {});
    double distance(std::span<const float> a, std::span<const float> b, int width, int height) override;

private:
    JsonClient client_;
    std::string net_;
};

/// Deterministic pseudo-embeddings seeded by a SHA-256 of the content.
/// Meaningless semantically; used for offline runs and tests.
class HashEmbeddingClient final : public EmbeddingClient {
public:
    explicit HashEmbeddingClient(int dim = 64) : dim_(dim) {}
    EmbeddingVector embed_text(const std::string& text) override;
    EmbeddingVector embed_image(std::span<const float> rgb, int width, int height) override;
    std::string info() const override { return "hash"; }

    int text_calls() const { return text_calls_; }
    int image_calls() const { return image_calls_; }

private:
    int dim_;
    std::atomic<int> text_calls_{0};
    std::atomic<int> image_calls_{0};
};

/// Hex SHA-256 of raw bytes.
std::string content_hash(std::span<const std::uint8_t> bytes);

struct EvalOptions {
    int views = 36;
    int resolution = 64;
    double fov_y_deg = 45.0;
    ShadingConfig shading; // background fixed white by default
    std::optional<std::filesystem::path> ground_truth_dir;
    bool lpips = false;
    unsigned max_in_flight = 4;
};

struct MetricReport {
    double r_precision = 0.0;
    double image_text_score = 0.0;
    std::optional<double> image_image_score;
    std::optional<double> lpips;
    int views = 0;
    std::size_t candidates = 0;
    int image_embed_calls = 0;
    int text_embed_calls = 0;
    std::string embedding_info;

    nlohmann::json to_json() const;
};

/// Ground-truth file name for view index i: view_000.png, view_001.png, ...
std::string view_file_name(int index);

/// Renders the evaluation views (8-bit quantized, as written to disk),
/// embeds every view and each distinct prompt once, and scores them.
/// Ground-truth images identical to a render reuse its embedding.
MetricReport evaluate(const Mesh& mesh, const AppearanceFields<float>& fields, const RetrievalSet& set,
                      EmbeddingClient& embedder, LpipsClient* lpips, const EvalOptions& opts);

/// The quantized views evaluate() scores, in the same order.
std::vector<Image8> render_eval_views(const Mesh& mesh, const AppearanceFields<float>& fields,
                                      const EvalOptions& opts);

} // namespace dstyle
