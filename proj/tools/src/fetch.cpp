// SPDX-License-Identifier: Apache-2.0
#include "fetch.hpp"

#include <algorithm>
#include <array>
#include <cstdio>
#include <fstream>
#include <memory>
#include <ostream>
#include <stdexcept>
#include <cstring>

#include <curl/curl.h>
#include <openssl/evp.h>
#include <zlib.h>

namespace maven::fetch {

namespace fs = std::filesystem;

std::vector<Artifact> dataset_artifacts(const std::string& dataset) {
    if (dataset == "cifar10") {
        return {{"https://www.cs.toronto.edu/~kriz/cifar-10-binary.tar.gz", "cifar-10-binary.tar.gz",
                 "c32a1d4ab5d03f1284b67883e8d87530", true}};
    }
    if (dataset == "svhn") {
        return {{"http://ufldl.stanford.edu/housenumbers/train_32x32.mat", "train_32x32.mat",
                 "e26dedcc434d2e4c54c9b2d4a06d8373", false},
                {"http://ufldl.stanford.edu/housenumbers/test_32x32.mat", "test_32x32.mat",
                 "eb5a983be6a315427106f1b164d9cef3", false}};
    }
    throw std::invalid_argument("unknown dataset '" + dataset + "' (expected cifar10 or svhn)");
}

namespace {

size_t write_cb(char* ptr, size_t size, size_t nmemb, void* user) {
    auto* out = static_cast<std::ofstream*>(user);
    out->write(ptr, static_cast<std::streamsize>(size * nmemb));
    return *out ? size * nmemb : 0;
}

struct CurlGlobal {
    CurlGlobal() { curl_global_init(CURL_GLOBAL_DEFAULT); }
    ~CurlGlobal() { curl_global_cleanup(); }
};

}  // namespace

void download(const std::string& url, const fs::path& target) {
    static CurlGlobal global;
    const fs::path partial = target.string() + ".part";
    {
        std::ofstream out(partial, std::ios::binary);
        if (!out) throw std::runtime_error("cannot write " + partial.string());
        std::unique_ptr<CURL, decltype(&curl_easy_cleanup)> h(curl_easy_init(), curl_easy_cleanup);
        if (!h) throw std::runtime_error("curl initialization failed");
        curl_easy_setopt(h.get(), CURLOPT_URL, url.c_str());
        curl_easy_setopt(h.get(), CURLOPT_FOLLOWLOCATION, 1L);
        curl_easy_setopt(h.get(), CURLOPT_FAILONERROR, 1L);
        curl_easy_setopt(h.get(), CURLOPT_WRITEFUNCTION, write_cb);
        curl_easy_setopt(h.get(), CURLOPT_WRITEDATA, &out);
        const CURLcode rc = curl_easy_perform(h.get());
        if (rc != CURLE_OK) {
            out.close();
            fs::remove(partial);
            throw std::runtime_error("download of " + url + " failed: " + curl_easy_strerror(rc));
        }
    }
    fs::rename(partial, target);
}

std::string md5_file(const fs::path& file) {
    std::ifstream in(file, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + file.string());
    std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), EVP_MD_CTX_free);
    if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_md5(), nullptr) != 1) throw std::runtime_error("md5 init failed");
    std::array<char, 1 << 16> buf{};
    while (in) {
        in.read(buf.data(), buf.size());
        if (in.gcount() > 0) EVP_DigestUpdate(ctx.get(), buf.data(), static_cast<size_t>(in.gcount()));
    }
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    EVP_DigestFinal_ex(ctx.get(), digest, &len);
    std::string hex;
    char b[3];
    for (unsigned int i = 0; i < len; ++i) {
        std::snprintf(b, sizeof(b), "%02x", digest[i]);
        hex += b;
    }
    return hex;
}

namespace {

std::size_t octal(const char* p, std::size_t n) {
    std::size_t v = 0;
    for (std::size_t i = 0; i < n && p[i]; ++i) {
        if (p[i] == ' ') continue;
        if (p[i] < '0' || p[i] > '7') throw std::runtime_error("tar: malformed octal field");
        v = v * 8 + static_cast<std::size_t>(p[i] - '0');
    }
    return v;
}

void read_exact(gzFile gz, char* dst, std::size_t n) {
    while (n > 0) {
        const int got = gzread(gz, dst, static_cast<unsigned>(std::min<std::size_t>(n, 1u << 20)));
        if (got <= 0) throw std::runtime_error("tar: truncated archive");
        dst += got;
        n -= static_cast<std::size_t>(got);
    }
}

}  // namespace

std::vector<fs::path> extract_tar_gz(const fs::path& archive, const fs::path& dest) {
    std::unique_ptr<gzFile_s, decltype(&gzclose)> gz(gzopen(archive.string().c_str(), "rb"), gzclose);
    if (!gz) throw std::runtime_error("cannot open " + archive.string());
    std::vector<fs::path> written;
    std::array<char, 512> hdr{};
    std::vector<char> data;
    for (;;) {
        const int got = gzread(gz.get(), hdr.data(), 512);
        if (got == 0) break;
        if (got != 512) throw std::runtime_error("tar: truncated header");
        if (hdr[0] == '\0') break;  // end-of-archive block
        std::string name(hdr.data(), strnlen(hdr.data(), 100));
        const std::string prefix(hdr.data() + 345, strnlen(hdr.data() + 345, 155));
        if (!prefix.empty()) name = prefix + "/" + name;
        const std::size_t size = octal(hdr.data() + 124, 12);
        const char type = hdr[156];
        const fs::path rel = fs::path(name).lexically_normal();
        if (rel.is_absolute() || (!rel.empty() && *rel.begin() == "..")) {
            throw std::runtime_error("tar: entry escapes destination: " + name);
        }
        data.resize(size);
        read_exact(gz.get(), data.data(), size);
        const std::size_t pad = (512 - size % 512) % 512;
        if (pad > 0) read_exact(gz.get(), hdr.data(), pad);
        const fs::path out = dest / rel;
        if (type == '5') {
            fs::create_directories(out);
        } else if (type == '0' || type == '\0') {
            fs::create_directories(out.parent_path());
            std::ofstream f(out, std::ios::binary);
            f.write(data.data(), static_cast<std::streamsize>(size));
            if (!f) throw std::runtime_error("cannot write " + out.string());
            written.push_back(out);
        }
    }
    return written;
}

void fetch_artifact(const Artifact& a, const fs::path& dest, std::ostream& log) {
    fs::create_directories(dest);
    const fs::path target = dest / a.file;
    if (fs::exists(target) && md5_file(target) == a.md5) {
        log << a.file << ": present, checksum ok\n";
    } else {
        log << a.file << ": downloading " << a.url << '\n';
        download(a.url, target);
        const std::string sum = md5_file(target);
        if (sum != a.md5) {
            fs::remove(target);
            throw std::runtime_error(a.file + ": checksum mismatch (expected " + a.md5 + ", got " + sum + ")");
        }
        log << a.file << ": checksum ok\n";
    }
    if (a.extract) {
        const auto files = extract_tar_gz(target, dest);
        log << a.file << ": extracted " << files.size() << " files\n";
    }
}

}  // namespace maven::fetch
