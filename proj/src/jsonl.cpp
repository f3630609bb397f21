#include "synthpii/jsonl.hpp"

#include <fstream>
#include <sstream>

#include "synthpii/error.hpp"

namespace synthpii::io {

void for_each_line(const std::filesystem::path &path,
                   const std::function<void(std::size_t, std::string_view)> &fn) {
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw IoError("cannot open " + path.string());
    std::string line;
    std::size_t number = 0;
    while (std::getline(in, line)) {
        ++number;
        if (!line.empty() && line.back() == '\r')
            line.pop_back();
        if (line.find_first_not_of(" \t") == std::string::npos)
            continue;
        fn(number, line);
    }
    if (in.bad())
        throw IoError("read failure on " + path.string());
}

std::string read_file(const std::filesystem::path &path) {
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw IoError("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const std::filesystem::path &path, std::string_view content) {
    if (path.has_parent_path())
        std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out)
        throw IoError("cannot write " + path.string());
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out)
        throw IoError("write failure on " + path.string());
}

std::string dump_row(const Json &row) {
    return row.dump(-1, ' ', false, Json::error_handler_t::strict);
}

std::string dump_doc(const Json &doc) { return doc.dump(2) + "\n"; }

void write_jsonl(const std::filesystem::path &path, const std::vector<Json> &rows) {
    std::string buf;
    for (const auto &row : rows) {
        buf += dump_row(row);
        buf += '\n';
    }
    write_file(path, buf);
}

void write_json(const std::filesystem::path &path, const Json &doc) {
    write_file(path, dump_doc(doc));
}

} // namespace synthpii::io
