#include <cstdlib>
#include <string>

#include "f3kit/error.hpp"
#include "f3kit/kernels.hpp"

namespace f3kit::kernels {

const Table& active() {
    static const Table* chosen = [] {
        const char* env = std::getenv("F3KIT_SIMD");
        std::string mode = env ? env : "auto";
        if (mode == "scalar") return &scalar_table();
        const Table* v = avx2_table();
        if (mode == "avx2") {
            if (!v) fail(ErrorKind::usage, "F3KIT_SIMD=avx2 requested but AVX2+FMA is unavailable");
            return v;
        }
        if (mode != "auto") {
            fail(ErrorKind::usage, "unknown F3KIT_SIMD value '" + mode +
                                       "' (expected scalar, avx2 or auto)");
        }
        return v ? v : &scalar_table();
    }();
    return *chosen;
}

}  // namespace f3kit::kernels
