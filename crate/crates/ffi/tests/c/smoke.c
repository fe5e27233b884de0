#include <stdio.h>
#include <string.h>

#include "regen_lab.h"

static const char *CONFIG =
    "schema_version = 1\n"
    "name = \"c-smoke\"\n"
    "seeds = [1]\n"
    "[process.contact2]\n"
    "b = 0.75\n"
    "[scanner]\n"
    "horizon = 100\n"
    "max_time = 500\n";

int main(void) {
    RlConfig *config = NULL;
    if (rl_config_from_toml(CONFIG, &config) != RL_OK) {
        fprintf(stderr, "config: %s\n", rl_last_error());
        return 1;
    }
    RlScan *scan = NULL;
    if (rl_scan_run(config, 1, &scan) != RL_OK) {
        fprintf(stderr, "scan: %s\n", rl_last_error());
        return 1;
    }
    size_t count = 0;
    rl_scan_break_time_count(scan, &count);
    uint64_t taus[8];
    size_t written = 0;
    rl_scan_break_times(scan, taus, 8, &written);
    if (count == 0 || written == 0 || taus[0] > taus[written - 1]) {
        return 1;
    }
    if (strncmp(rl_scan_cycles_csv(scan), "k,tau_start,tau_end,gap,trace", 29) != 0) {
        return 1;
    }
    RlConfig *bad = NULL;
    if (rl_config_from_toml("schema_version = 7", &bad) != RL_CONFIG_ERROR || bad != NULL) {
        return 1;
    }
    printf("%zu %llu\n", count, (unsigned long long)taus[0]);
    rl_scan_free(scan);
    rl_config_free(config);
    return 0;
}
