/* Solve a market from CSV files and print per-instrument energies.
 *
 *   cc solve.c -I../include -L../../../target/release -lstockdft_ffi -lm -lpthread -ldl -o solve
 *   ./solve prices.csv caps.csv [key=value ...]
 */
#include <stdio.h>
#include <stdlib.h>
#include <string.h>

#include "stockdft.h"

static char *slurp(const char *path, size_t *len) {
    FILE *f = fopen(path, "rb");
    if (!f) return NULL;
    fseek(f, 0, SEEK_END);
    long n = ftell(f);
    fseek(f, 0, SEEK_SET);
    char *buf = malloc((size_t)n + 1);
    if (buf && fread(buf, 1, (size_t)n, f) != (size_t)n) {
        free(buf);
        buf = NULL;
    }
    fclose(f);
    *len = (size_t)n;
    return buf;
}

int main(int argc, char **argv) {
    if (argc < 3) {
        fprintf(stderr, "usage: %s prices.csv caps.csv [key=value ...]\n", argv[0]);
        return 1;
    }
    size_t plen = 0, clen = 0;
    char *prices = slurp(argv[1], &plen);
    char *caps = slurp(argv[2], &clen);
    if (!prices || !caps) {
        fprintf(stderr, "cannot read input\n");
        return 2;
    }

    SdUniverse *universe = NULL;
    if (sd_universe_from_csv((const uint8_t *)prices, plen, (const uint8_t *)caps, clen, false, &universe) != SD_STATUS_OK) {
        fprintf(stderr, "%s\n", sd_last_error_message());
        return 2;
    }
    SdConfig *config = sd_config_new();
    for (int i = 3; i < argc; i++) {
        char *eq = strchr(argv[i], '=');
        if (!eq) continue;
        *eq = '\0';
        if (sd_config_set(config, argv[i], eq + 1) != SD_STATUS_OK) {
            fprintf(stderr, "%s\n", sd_last_error_message());
            return 1;
        }
    }

    SdSolution *solution = NULL;
    SdStatus status = sd_solve(universe, config, &solution);
    if (status != SD_STATUS_OK && status != SD_STATUS_NOT_CONVERGED) {
        fprintf(stderr, "%s\n", sd_last_error_message());
        return 2;
    }
    for (size_t i = 0; i < sd_solution_count(solution); i++) {
        char *ticker = sd_solution_ticker(solution, i);
        double eps = 0.0;
        sd_solution_epsilon(solution, i, &eps, NULL);
        printf("%s %.10g\n", ticker, eps);
        sd_string_free(ticker);
    }
    SdTotals totals;
    sd_solution_totals(solution, &totals);
    printf("E_DFT %.10g after %zu iterations\n", totals.e_dft, sd_solution_iterations(solution));

    sd_solution_free(solution);
    sd_config_free(config);
    sd_universe_free(universe);
    free(prices);
    free(caps);
    return status == SD_STATUS_OK ? 0 : 3;
}
