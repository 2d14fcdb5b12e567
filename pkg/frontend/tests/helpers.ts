import { MetricsPayload, QueryPayload, SubspaceDescription } from "../src/api";

export function makeSubspace(leafId: number,
                             bounds: Array<[number, number]>): SubspaceDescription {
    return { leaf_id: leafId, bounds, cost: 0.5, relevance: 0.1 };
}

export function makeQuery(instanceId: number, position: number,
                          overrides: Partial<QueryPayload> = {}): QueryPayload {
    return {
        instance_id: instanceId,
        position,
        score: -3.25,
        features: [0.5, 1.5],
        descriptions: [makeSubspace(7, [[0.1, 0.9], [0.2, 0.8]])],
        ...overrides,
    };
}

export function makeMetrics(overrides: Partial<MetricsPayload> = {}): MetricsPayload {
    return {
        queries_spent: 0,
        cum_anomalies: 0,
        curve: [],
        top_instances: [],
        weight_hash: "",
        drift_report: [],
        ...overrides,
    };
}

export function tick(): Promise<void> {
    return new Promise(resolve => setTimeout(resolve, 0));
}
