#include "synthpii/records.hpp"

#include "synthpii/error.hpp"

namespace synthpii {

std::vector<TextItem> load_text_items(const std::filesystem::path &path) {
    std::vector<TextItem> items;
    io::for_each_line(path, [&](std::size_t line_no, std::string_view line) {
        try {
            const auto row = io::Json::parse(line);
            TextItem item;
            const auto &id = row.at("id");
            item.id = id.is_number_integer() ? std::to_string(id.get<long long>())
                                             : id.get<std::string>();
            item.text = row.at("text").get<std::string>();
            if (const auto it = row.find("source_id"); it != row.end() && it->is_string())
                item.source_id = it->get<std::string>();
            items.push_back(std::move(item));
        } catch (const std::exception &e) {
            throw ParseError(path.string(), line_no, e.what());
        }
    });
    return items;
}

io::Json to_json(const TextItem &item) {
    io::Json row{{"id", item.id}};
    if (!item.source_id.empty())
        row["source_id"] = item.source_id;
    row["text"] = item.text;
    return row;
}

void save_text_items(const std::filesystem::path &path, std::span<const TextItem> items) {
    std::vector<io::Json> rows;
    rows.reserve(items.size());
    for (const auto &item : items)
        rows.push_back(to_json(item));
    io::write_jsonl(path, rows);
}

} // namespace synthpii
