#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "synthpii/jsonl.hpp"

namespace synthpii {

/// A piece of text with an identity, e.g. a synthetic post and the post it was derived from.
struct TextItem {
    std::string id;
    std::string text;
    /// Lineage: id of the source post, empty when not derived from one.
    std::string source_id;

    friend bool operator==(const TextItem &, const TextItem &) = default;
};

/// JSONL rows with `id` and `text`, optional `source_id`. Other fields are ignored,
/// so post and annotation files load as well.
std::vector<TextItem> load_text_items(const std::filesystem::path &path);
void save_text_items(const std::filesystem::path &path, std::span<const TextItem> items);
io::Json to_json(const TextItem &item);

} // namespace synthpii
