#define DOCTEST_CONFIG_IMPLEMENT
#include <doctest.h>
#include <spdlog/cfg/env.h>
#include <spdlog/spdlog.h>

// Quiet by default; SPDLOG_LEVEL=info restores the server log.
int main(int argc, char** argv) {
    spdlog::set_level(spdlog::level::err);
    spdlog::cfg::load_env_levels();
    doctest::Context ctx(argc, argv);
    return ctx.run();
}
