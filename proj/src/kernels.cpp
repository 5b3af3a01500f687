#include "snmpc/kernels.hpp"

#include <cstdlib>
#include <cstring>

namespace snmpc::kernels {

namespace {

struct Resolved {
    const Table* table;
    std::string_view name;
};

Resolved resolve() {
    const char* req = std::getenv("SNMPC_KERNELS");
    bool want_scalar = req != nullptr && std::strcmp(req, "scalar") == 0;
#if defined(SNMPC_HAVE_AVX2)
    if (!want_scalar && __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma"))
        return {&avx2::table(), "avx2"};
#endif
    (void)want_scalar;
    return {&scalar::table(), "scalar"};
}

const Resolved& resolved() {
    static const Resolved r = resolve();
    return r;
}

}  // namespace

const Table& active() { return *resolved().table; }

std::string_view active_backend() { return resolved().name; }

}  // namespace snmpc::kernels
