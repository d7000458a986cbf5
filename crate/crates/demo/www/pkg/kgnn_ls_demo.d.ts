/* tslint:disable */
/* eslint-disable */

export class Demo {
    free(): void;
    [Symbol.dispose](): void;
    clamps(): Float64Array;
    /**
     * The entity's new clamp, `NaN` when free.
     */
    cycle_clamp(entity: number): number;
    /**
     * Flat `head, tail, relation` triples.
     */
    edges(): Uint32Array;
    energy(): number;
    entity_count(): number;
    items(): Uint32Array;
    constructor(seed: number);
    /**
     * The relation the user's taste was generated from.
     */
    preferred_relation(): number;
    relation_count(): number;
    residual(): number;
    set_weight(relation: number, w: number): void;
    /**
     * Labels after `steps` propagation steps, or the exact solution when
     * `steps` is undefined.
     */
    solve(steps?: number | null): Float64Array;
}

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly __wbg_demo_free: (a: number, b: number) => void;
    readonly demo_clamps: (a: number) => [number, number];
    readonly demo_cycle_clamp: (a: number, b: number) => [number, number, number];
    readonly demo_edges: (a: number) => [number, number];
    readonly demo_energy: (a: number) => number;
    readonly demo_entity_count: (a: number) => number;
    readonly demo_items: (a: number) => [number, number];
    readonly demo_new: (a: number) => [number, number, number];
    readonly demo_preferred_relation: (a: number) => number;
    readonly demo_relation_count: (a: number) => number;
    readonly demo_residual: (a: number) => number;
    readonly demo_set_weight: (a: number, b: number, c: number) => [number, number];
    readonly demo_solve: (a: number, b: number) => [number, number, number, number];
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __wbindgen_free: (a: number, b: number, c: number) => void;
    readonly __externref_table_dealloc: (a: number) => void;
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
