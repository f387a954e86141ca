/* tslint:disable */
/* eslint-disable */
export const memory: WebAssembly.Memory;
export const __wbg_oracletrajectories_free: (a: number, b: number) => void;
export const oracle_trajectories_2d: (a: number, b: number, c: number, d: number, e: number, f: bigint) => [number, number, number];
export const oracletrajectories_path_len: (a: number) => number;
export const oracletrajectories_paths: (a: number) => [number, number];
export const oracletrajectories_points: (a: number) => [number, number];
export const posterior_top1_curve: (a: number, b: number, c: number, d: bigint) => [number, number, number, number];
export const shift_schedule: (a: number, b: number, c: number) => [number, number, number, number];
export const __wbindgen_externrefs: WebAssembly.Table;
export const __externref_table_dealloc: (a: number) => void;
export const __wbindgen_free: (a: number, b: number, c: number) => void;
export const __wbindgen_start: () => void;
