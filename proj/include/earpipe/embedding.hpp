#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>

#include "earpipe/core_types.hpp"

namespace earpipe {

enum class ModelFamily { ViT_T, ViT_S, ViT_B, ViT_L, mock };

std::string_view to_string(ModelFamily f);
ModelFamily model_family_from_string(std::string_view s);

struct BackendDescriptor {
    ModelFamily family = ModelFamily::mock;
    int patch_size = 16;

    /// "<family>_p<patch>", e.g. "ViT_B_p16".
    std::string tag() const;
    static BackendDescriptor from_tag(std::string_view tag);

    auto operator<=>(const BackendDescriptor&) const = default;
};

inline constexpr int kEmbedderInputSize = 112;

/// Maps an aligned 112x112 three-channel ear image to a 512-D vector.
class EmbedderBackend {
public:
    virtual ~EmbedderBackend() = default;
    virtual BackendDescriptor descriptor() const = 0;
    virtual EmbeddingVector embed(const Image& image) = 0;
};

class SideClassifierBackend {
public:
    virtual ~SideClassifierBackend() = default;
    virtual std::string name() const = 0;
    virtual Side classify(const Image& image) = 0;
};

/// Record key -> embedding.
using EmbeddingTable = std::map<std::string, Embedding>;

/// On-disk embedding store for one backend: `<tag>.emb` holds little-endian float32 vectors
/// back to back, `<tag>.idx.json` maps record key -> {offset (bytes), hash (input content)}.
/// Writes go through a mutex; flush() rewrites both files in key order.
class EmbeddingCache {
public:
    EmbeddingCache(std::filesystem::path dir, BackendDescriptor descriptor);

    std::optional<EmbeddingVector> find(const std::string& key,
                                        const std::string& content_hash) const;
    void put(const std::string& key, const std::string& content_hash,
             const EmbeddingVector& vector);
    void flush() const;

    std::filesystem::path data_file() const;
    std::filesystem::path index_file() const;
    std::size_t size() const;

private:
    struct Entry {
        std::string hash;
        EmbeddingVector vector;
    };

    std::filesystem::path dir_;
    BackendDescriptor descriptor_;
    mutable std::mutex mutex_;
    std::map<std::string, Entry> entries_;
};

struct EmbedStats {
    std::size_t computed = 0;
    std::size_t cached = 0;
};

/// One embedding per record. Images must be 112x112. With a cache, hits (same key and same
/// input file hash) skip the backend. `make_backend` is called once per worker.
EmbeddingTable embed_manifest(const DatasetManifest& manifest,
                              const std::function<std::unique_ptr<EmbedderBackend>()>& make_backend,
                              EmbeddingCache* cache = nullptr, int workers = 1,
                              EmbedStats* stats = nullptr);

/// Labels unknown-side records with the classifier (labelled ones are left alone) and turns
/// side-splitting on, so each (subject, side) becomes its own identity.
DatasetManifest split_by_side(const DatasetManifest& manifest, SideClassifierBackend& classifier);

}  // namespace earpipe
