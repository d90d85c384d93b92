#define DOCTEST_CONFIG_IMPLEMENT
#include <doctest.h>

#include "seqcox/log.hpp"

int main(int argc, char** argv) {
    seqcox::log::set_level(seqcox::log::Level::error);
    doctest::Context ctx(argc, argv);
    return ctx.run();
}
