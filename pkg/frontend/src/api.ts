// Typed client for the session service HTTP API. The console never scores
// or labels anything locally; every piece of state shown to the analyst
// comes from one of these endpoints.

export const SCHEMA_VERSION = 1;

export interface SubspaceDescription {
    leaf_id: number;
    bounds: Array<[number, number]>;
    cost: number;
    relevance: number;
}

export interface QueryPayload {
    instance_id: number;
    position: number;
    score: number;
    features: number[];
    descriptions: SubspaceDescription[];
}

export interface TopInstance {
    instance_id: number;
    score: number;
}

export interface MetricsPayload {
    queries_spent: number;
    cum_anomalies: number;
    curve: number[];
    top_instances: TopInstance[];
    weight_hash: string;
    drift_report: unknown[];
}

export interface SessionState {
    session_id: string;
    strategy: string;
    batch: number;
    queries_spent: number;
    pending: number[];
    n_instances: number;
}

export interface CreateSessionResponse {
    session_id: string;
    queries: QueryPayload[];
}

export interface LabelResponse {
    metrics: MetricsPayload;
    queries: QueryPayload[];
}

export interface InstanceDescription {
    instance_id: number;
    subspaces: SubspaceDescription[];
}

export type Label = 1 | -1;

export class ApiError extends Error {
    constructor(public status: number, detail: string) {
        super(detail);
        this.name = "ApiError";
    }
}

async function unwrap<T>(response: Response): Promise<T> {
    const body = await response.json();
    if (!response.ok) {
        throw new ApiError(response.status, body.detail ?? response.statusText);
    }
    if (body.schema_version !== SCHEMA_VERSION) {
        throw new ApiError(
            response.status,
            `unsupported schema version ${body.schema_version}`);
    }
    return body as T;
}

export class ApiClient {
    constructor(private baseUrl: string) { }

    createSession(config: object): Promise<CreateSessionResponse> {
        return fetch(`${this.baseUrl}/sessions`, {
            method: "POST",
            headers: { "Content-Type": "application/json" },
            body: JSON.stringify(config),
        }).then(r => unwrap<CreateSessionResponse>(r));
    }

    getState(sessionId: string): Promise<SessionState> {
        return fetch(`${this.baseUrl}/sessions/${sessionId}`)
            .then(r => unwrap<SessionState>(r));
    }

    getQueries(sessionId: string): Promise<{ queries: QueryPayload[] }> {
        return fetch(`${this.baseUrl}/sessions/${sessionId}/queries`)
            .then(r => unwrap<{ queries: QueryPayload[] }>(r));
    }

    submitLabel(sessionId: string, instanceId: number,
                label: Label): Promise<LabelResponse> {
        return fetch(`${this.baseUrl}/sessions/${sessionId}/labels`, {
            method: "POST",
            headers: { "Content-Type": "application/json" },
            body: JSON.stringify({ instance_id: instanceId, label }),
        }).then(r => unwrap<LabelResponse>(r));
    }

    getMetrics(sessionId: string): Promise<MetricsPayload> {
        return fetch(`${this.baseUrl}/sessions/${sessionId}/metrics`)
            .then(r => unwrap<MetricsPayload>(r));
    }

    getDescriptions(sessionId: string, ids: number[]):
            Promise<{ descriptions: InstanceDescription[] }> {
        const qs = encodeURIComponent(ids.join(","));
        return fetch(`${this.baseUrl}/sessions/${sessionId}/descriptions?ids=${qs}`)
            .then(r => unwrap<{ descriptions: InstanceDescription[] }>(r));
    }
}
