/* tslint:disable */
/* eslint-disable */
export const memory: WebAssembly.Memory;
export const __wbg_curve_free: (a: number, b: number) => void;
export const __wbg_decisionmap_free: (a: number, b: number) => void;
export const __wbg_unmixing_free: (a: number, b: number) => void;
export const classify_grid: (a: number, b: number, c: number, d: number, e: number, f: number, g: number, h: number, i: number, j: number, k: number, l: number, m: number, n: number) => [number, number, number];
export const curve_asymptote: (a: number) => number;
export const curve_converged: (a: number) => number;
export const curve_eval: (a: number, b: number) => number;
export const curve_growth: (a: number) => number;
export const curve_midpoint: (a: number) => number;
export const curve_r_squared: (a: number) => number;
export const decisionmap_confidence: (a: number) => [number, number];
export const decisionmap_labels: (a: number) => [number, number];
export const fit_curve: (a: number, b: number, c: number, d: number) => [number, number, number];
export const unmix_sources: (a: number, b: number, c: number, d: number, e: number) => [number, number, number];
export const unmixing_correlation: (a: number) => [number, number];
export const unmixing_mixed: (a: number) => [number, number];
export const unmixing_recovered: (a: number) => [number, number];
export const unmixing_sources: (a: number) => [number, number];
export const __wbindgen_externrefs: WebAssembly.Table;
export const __wbindgen_malloc: (a: number, b: number) => number;
export const __wbindgen_realloc: (a: number, b: number, c: number, d: number) => number;
export const __externref_table_dealloc: (a: number) => void;
export const __wbindgen_free: (a: number, b: number, c: number) => void;
export const __wbindgen_start: () => void;
