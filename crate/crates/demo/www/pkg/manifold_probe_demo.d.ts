/* tslint:disable */
/* eslint-disable */

export class Curve {
    private constructor();
    free(): void;
    [Symbol.dispose](): void;
    eval(x: number): number;
    readonly asymptote: number;
    readonly converged: boolean;
    readonly growth: number;
    readonly midpoint: number;
    readonly r_squared: number;
}

/**
 * Class and confidence per grid cell, row-major from the top-left corner.
 */
export class DecisionMap {
    private constructor();
    free(): void;
    [Symbol.dispose](): void;
    /**
     * Largest class posterior of the per-class Gaussian mixture.
     */
    readonly confidence: Float64Array;
    readonly labels: Uint32Array;
}

/**
 * Row-major `n x 2` point sets from one unmixing run.
 */
export class Unmixing {
    private constructor();
    free(): void;
    [Symbol.dispose](): void;
    /**
     * `|corr(recovered_i, source_j)|`, row-major 2 x 2.
     */
    readonly correlation: Float64Array;
    readonly mixed: Float64Array;
    readonly recovered: Float64Array;
    readonly sources: Float64Array;
}

export function classify_grid(points: Float64Array, xmin: number, xmax: number, ymin: number, ymax: number, width: number, height: number, metric: string, classifier: string, k: number, lambda: number): DecisionMap;

/**
 * Fits `L / (1 + exp(-k (x - x0)))` to the points.
 */
export function fit_curve(xs: Float64Array, ys: Float64Array): Curve;

export function unmix_sources(angle: number, n: number, seed: number, method: string): Unmixing;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly __wbg_curve_free: (a: number, b: number) => void;
    readonly __wbg_decisionmap_free: (a: number, b: number) => void;
    readonly __wbg_unmixing_free: (a: number, b: number) => void;
    readonly classify_grid: (a: number, b: number, c: number, d: number, e: number, f: number, g: number, h: number, i: number, j: number, k: number, l: number, m: number, n: number) => [number, number, number];
    readonly curve_asymptote: (a: number) => number;
    readonly curve_converged: (a: number) => number;
    readonly curve_eval: (a: number, b: number) => number;
    readonly curve_growth: (a: number) => number;
    readonly curve_midpoint: (a: number) => number;
    readonly curve_r_squared: (a: number) => number;
    readonly decisionmap_confidence: (a: number) => [number, number];
    readonly decisionmap_labels: (a: number) => [number, number];
    readonly fit_curve: (a: number, b: number, c: number, d: number) => [number, number, number];
    readonly unmix_sources: (a: number, b: number, c: number, d: number, e: number) => [number, number, number];
    readonly unmixing_correlation: (a: number) => [number, number];
    readonly unmixing_mixed: (a: number) => [number, number];
    readonly unmixing_recovered: (a: number) => [number, number];
    readonly unmixing_sources: (a: number) => [number, number];
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __wbindgen_malloc: (a: number, b: number) => number;
    readonly __wbindgen_realloc: (a: number, b: number, c: number, d: number) => number;
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
