/* tslint:disable */
/* eslint-disable */

/**
 * Ring mixture and pure-oracle Euler paths from independent priors.
 */
export class OracleTrajectories {
    private constructor();
    free(): void;
    [Symbol.dispose](): void;
    readonly path_len: number;
    /**
     * Paths back to back, each `path_len` states of two coordinates.
     */
    readonly paths: Float64Array;
    /**
     * Training points as `[x0, y0, x1, y1, ..]`.
     */
    readonly points: Float64Array;
}

export function oracle_trajectories_2d(clusters: number, per_cluster: number, steps: number, shift: number, n_paths: number, seed: bigint): OracleTrajectories;

/**
 * Mean top-1 posterior weight on unit-Gaussian data, interleaved as
 * `[t0, mean0, t1, mean1, ..]` over the default sweep times.
 */
export function posterior_top1_curve(n: number, d: number, n_mc: number, seed: bigint): Float64Array;

/**
 * Left endpoints of the shifted grid; the last element is the fraction of
 * steps at or below `threshold`.
 */
export function shift_schedule(steps: number, shift: number, threshold: number): Float64Array;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly __wbg_oracletrajectories_free: (a: number, b: number) => void;
    readonly oracle_trajectories_2d: (a: number, b: number, c: number, d: number, e: number, f: bigint) => [number, number, number];
    readonly oracletrajectories_path_len: (a: number) => number;
    readonly oracletrajectories_paths: (a: number) => [number, number];
    readonly oracletrajectories_points: (a: number) => [number, number];
    readonly posterior_top1_curve: (a: number, b: number, c: number, d: bigint) => [number, number, number, number];
    readonly shift_schedule: (a: number, b: number, c: number) => [number, number, number, number];
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __externref_table_dealloc: (a: number) => void;
    readonly __wbindgen_free: (a: number, b: number, c: number) => void;
    readonly __wbindgen_start: () => void;
}

export type SyncInitInput = BufferSource | WebAssembly.Module;

/**
 * Instantiates the given `module`, which can either be bytes or
 * a precompiled `WebAssembly.Module`.
 *
 * @param {{ module: SyncInitInput }} module - Passing `SyncInitInput` directly is deprecated.
 *
 * @returns {InitOutput}
 */
export function initSync(module: { module: SyncInitInput } | SyncInitInput): InitOutput;

/**
 * If `module_or_path` is {RequestInfo} or {URL}, makes a request and
 * for everything else, calls `WebAssembly.instantiate` directly.
 *
 * @param {{ module_or_path: InitInput | Promise<InitInput> }} module_or_path - Passing `InitInput` directly is deprecated.
 *
 * @returns {Promise<InitOutput>}
 */
export default function __wbg_init (module_or_path?: { module_or_path: InitInput | Promise<InitInput> } | InitInput | Promise<InitInput>): Promise<InitOutput>;
