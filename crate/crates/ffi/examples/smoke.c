#include <math.h>
#include <stdio.h>
#include <string.h>

#include "silcheck.h"

int main(void) {
    SilScenario *sc = NULL;
    if (sil_scenario_instantiate("TC6", NAN, &sc) != SIL_STATUS_OK) {
        fprintf(stderr, "instantiate: %s\n", sil_last_error());
        return 1;
    }
    SilTrace *trace = NULL;
    if (sil_run_passive(sc, &trace) != SIL_STATUS_OK) {
        fprintf(stderr, "run: %s\n", sil_last_error());
        return 1;
    }
    char *terminal = NULL;
    sil_trace_terminal(trace, &terminal);
    SilEgoState last;
    sil_trace_ego_at(trace, sil_trace_tick_count(trace) - 1, &last);
    printf("%zu %s %d\n", sil_trace_tick_count(trace), terminal, last.lane_id);
    int ok = strcmp(terminal, "completed") == 0;
    sil_string_free(terminal);

    if (sil_scenario_instantiate("TC42", NAN, &sc) != SIL_STATUS_INVALID_ARGUMENT) {
        return 1;
    }
    sil_trace_free(trace);
    sil_scenario_free(sc);
    return ok ? 0 : 1;
}
