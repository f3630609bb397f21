#pragma once

#include <cstddef>
#include <filesystem>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace synthpii::io {

using Json = nlohmann::ordered_json;

/// Calls `fn(line_number, line)` for every non-blank line; line numbers are 1-based.
void for_each_line(const std::filesystem::path &path,
                   const std::function<void(std::size_t, std::string_view)> &fn);

std::string read_file(const std::filesystem::path &path);

/// Writes atomically enough for our purposes: truncates and rewrites the whole file.
void write_file(const std::filesystem::path &path, std::string_view content);

void write_jsonl(const std::filesystem::path &path, const std::vector<Json> &rows);
void write_json(const std::filesystem::path &path, const Json &doc);

/// Canonical serialisation: compact for JSONL rows, 2-space indent for documents.
std::string dump_row(const Json &row);
std::string dump_doc(const Json &doc);

} // namespace synthpii::io
