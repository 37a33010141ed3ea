#include "gcnet/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <sstream>

#include "gcnet/errors.hpp"

namespace gcnet {

void save_params(const std::string& path, const ParamStore& store) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot open for writing: " + path);
    f << "GCN1\n";
    f << "step " << store.step_count << "\n";
    f << "tensors " << store.p.size() << "\n";
    for (const auto& [name, param] : store.p) {
        f << name << ' ' << (param.frozen ? 1 : 0) << ' ' << param.value.ndim();
        for (int d = 0; d < param.value.ndim(); ++d) f << ' ' << param.value.dim(d);
        f << '\n';
    }
    for (const auto& [name, param] : store.p)
        f.write(reinterpret_cast<const char*>(param.value.data()),
                static_cast<std::streamsize>(param.value.numel() * 8));
    if (!f) throw IoError("write failed: " + path);
}

ParamStore load_params(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open: " + path);
    std::string magic;
    if (!std::getline(f, magic) || magic != "GCN1") throw ParseError(path + ": bad checkpoint magic");

    auto expect_line = [&](const char* key) -> std::int64_t {
        std::string line;
        if (!std::getline(f, line)) throw ParseError(path + ": truncated header");
        std::istringstream ss(line);
        std::string k;
        std::int64_t v = 0;
        if (!(ss >> k >> v) || k != key) throw ParseError(path + ": expected '" + key + "' line");
        return v;
    };

    ParamStore store;
    store.step_count = expect_line("step");
    const std::int64_t count = expect_line("tensors");
    if (count < 0) throw ParseError(path + ": negative tensor count");

    std::vector<std::string> order;
    for (std::int64_t i = 0; i < count; ++i) {
        std::string line;
        if (!std::getline(f, line)) throw ParseError(path + ": truncated tensor index");
        std::istringstream ss(line);
        std::string name;
        int frozen = 0, ndim = 0;
        if (!(ss >> name >> frozen >> ndim) || ndim < 1 || ndim > 8)
            throw ParseError(path + ": malformed index entry " + std::to_string(i));
        std::vector<int> dims(static_cast<std::size_t>(ndim));
        for (auto& d : dims)
            if (!(ss >> d) || d < 1) throw ParseError(path + ": bad dims for tensor " + name);
        if (store.p.count(name)) throw ParseError(path + ": duplicate tensor name " + name);
        Param param;
        param.value = Tensor(dims);
        param.grad = Tensor(dims);
        param.frozen = frozen != 0;
        store.p.emplace(name, std::move(param));
        order.push_back(name);
    }
    for (const std::string& name : order) {
        Tensor& t = store.p.at(name).value;
        f.read(reinterpret_cast<char*>(t.data()), static_cast<std::streamsize>(t.numel() * 8));
        if (!f) throw ParseError(path + ": truncated payload at tensor " + name);
    }
    return store;
}

}  // namespace gcnet
